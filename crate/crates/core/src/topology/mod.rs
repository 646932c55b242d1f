//! Computational topology of latent point clouds.

mod bottleneck;
mod rank;
mod rips;
mod sheaf;

pub use bottleneck::{
    bottleneck_distance, finite_bottleneck, ph_stability_gate, Bottleneck, StabilityGate, StabilityVerdict,
};
pub use rank::{effective_rank, EffectiveRank};
pub use rips::{lifetimes, max_lifetime, rips_persistence, Bar, PersistenceDiagram, MAX_POINTS_DIM0, MAX_POINTS_DIM1};
pub use sheaf::{conditional_variance, farthest_point_seeds, patch_assignment, sheaf_consistency, SheafReport};
