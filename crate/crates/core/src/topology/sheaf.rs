use ndarray::ArrayView2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{distance, norm, CompensatedSum};
use crate::par;
use crate::trajectory::Trajectory;

/// Within-patch variance of the token cloud under a farthest-point cover.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SheafReport {
    pub per_layer: Vec<f64>,
    pub total: f64,
    pub patches: usize,
}

/// `m` seed indices by farthest-point sampling. The first seed is the
/// lowest-index point of maximal norm; each next seed maximizes the
/// distance to the chosen ones, ties going to the lower index.
pub fn farthest_point_seeds(points: ArrayView2<f64>, m: usize) -> Vec<usize> {
    let n = points.nrows();
    let m = m.min(n);
    if m == 0 {
        return Vec::new();
    }
    let mut first = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let r = norm(points.row(i));
        if r > best {
            best = r;
            first = i;
        }
    }
    let mut seeds = vec![first];
    let mut chosen = vec![false; n];
    chosen[first] = true;
    let mut gap: Vec<f64> = (0..n).map(|i| distance(points.row(i), points.row(first))).collect();
    while seeds.len() < m {
        let mut next = usize::MAX;
        let mut far = f64::NEG_INFINITY;
        for i in 0..n {
            if !chosen[i] && gap[i] > far {
                far = gap[i];
                next = i;
            }
        }
        seeds.push(next);
        chosen[next] = true;
        for (i, g) in gap.iter_mut().enumerate() {
            *g = g.min(distance(points.row(i), points.row(next)));
        }
    }
    seeds
}

/// Position in `seeds` of each point's nearest seed, ties to the earlier seed.
pub fn patch_assignment(points: ArrayView2<f64>, seeds: &[usize]) -> Vec<usize> {
    (0..points.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, &s) in seeds.iter().enumerate() {
                let d = distance(points.row(i), points.row(s));
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// `(1/T) Σ_patches Σ_{x ∈ patch} ‖x − μ_patch‖²`, the size-weighted mean of
/// the per-patch total variances.
pub fn conditional_variance(points: ArrayView2<f64>, assignment: &[usize], patches: usize) -> f64 {
    let (n, d) = points.dim();
    let mut count = vec![0usize; patches];
    let mut mean = vec![vec![0.0; d]; patches];
    for (i, &p) in assignment.iter().enumerate() {
        count[p] += 1;
        for j in 0..d {
            mean[p][j] += points[[i, j]];
        }
    }
    for (m, &c) in mean.iter_mut().zip(&count) {
        if c > 0 {
            m.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    let mut acc = CompensatedSum::new();
    for (i, &p) in assignment.iter().enumerate() {
        for j in 0..d {
            let r = points[[i, j]] - mean[p][j];
            acc.add(r * r);
        }
    }
    acc.total() / n as f64
}

/// Per layer: farthest-point cover with `m` patches, nearest-seed
/// assignment, then the size-weighted within-patch variance. The total is
/// the sum over layers.
pub fn sheaf_consistency(traj: &Trajectory, m: usize) -> Result<SheafReport> {
    if traj.token_states().is_none() {
        return Err(Error::precondition("sheaf consistency needs token_states"));
    }
    let t = traj.tokens();
    if m < 1 || m > t {
        return Err(Error::precondition(format!(
            "patch count must satisfy 1 ≤ m ≤ T = {t}, got {m}"
        )));
    }
    let per_layer = par::map_range(traj.layers(), |l| {
        let pts = traj.layer_tokens(l).expect("token states checked above");
        let seeds = farthest_point_seeds(pts, m);
        let assignment = patch_assignment(pts, &seeds);
        conditional_variance(pts, &assignment, seeds.len())
    });
    let total = per_layer.iter().sum();
    Ok(SheafReport {
        per_layer,
        total,
        patches: m,
    })
}
