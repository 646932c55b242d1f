//! Geometry diagnostics for layerwise hidden-state trajectories: curvature,
//! thermodynamic length, torsion, belief fields, composite scores, topology
//! and cross-model comparisons.

pub mod belief;
pub mod compare;
pub mod error;
pub mod fixtures;
pub mod format;
pub mod geometry;
pub mod linalg;
pub mod par;
pub mod prng;
pub mod report;
pub mod score;
pub mod thermo;
pub mod topology;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::{GradientBundle, Provenance, Trajectory};
