use ndarray::Array2;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{centroid, singular_values};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveRank {
    pub hard_rank: usize,
    pub participation_ratio: f64,
    pub singular_values: Vec<f64>,
}

pub const RANK_TOLERANCE: f64 = 1e-10;

/// Rank statistics of the layer means centered on their centroid.
pub fn effective_rank(traj: &Trajectory) -> Result<EffectiveRank> {
    let h = traj.layer_means();
    // shift by the first layer first so a constant trajectory centers to
    // exact zeros
    let base = h.row(0).to_owned();
    let shifted: Array2<f64> = &h - &base;
    let c = centroid(shifted.view());
    let centered = &shifted - &c;
    let sv = singular_values(centered.view())?;
    let max = sv.first().copied().unwrap_or(0.0);
    let hard_rank = if max == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
    };
    let sum: f64 = sv.iter().sum();
    let sq: f64 = sv.iter().map(|s| s * s).sum();
    let participation_ratio = if sq == 0.0 { 0.0 } else { sum * sum / sq };
    Ok(EffectiveRank {
        hard_rank,
        participation_ratio,
        singular_values: sv,
    })
}
