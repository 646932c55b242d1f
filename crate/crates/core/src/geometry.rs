//! Discrete differential geometry of the layer trajectory.
//!
//! All per-layer series here use 0-based storage; their `first_layer`
//! field gives the 1-based layer number of entry 0.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, distance, dot, jacobi_eigen, norm};
use crate::par;
use crate::trajectory::{require, Trajectory};

/// `κ_ℓ = ‖h_{ℓ+1} − 2h_ℓ + h_{ℓ−1}‖` for ℓ = 2..L−1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureProfile {
    pub kappa: Vec<f64>,
}

impl CurvatureProfile {
    pub const FIRST_LAYER: usize = 2;

    pub fn mean(&self) -> f64 {
        compensated_sum(self.kappa.iter().copied()) / self.kappa.len() as f64
    }
}

pub fn second_diff_curvature(traj: &Trajectory) -> Result<CurvatureProfile> {
    require(traj, 3)?;
    let h = traj.layer_means();
    let kappa = (1..traj.layers() - 1)
        .map(|i| {
            h.row(i + 1)
                .iter()
                .zip(h.row(i).iter())
                .zip(h.row(i - 1).iter())
                .map(|((a, b), c)| {
                    let dd = a - 2.0 * b + c;
                    dd * dd
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(CurvatureProfile { kappa })
}

/// `‖h_{ℓ+1} − h_ℓ‖` for each of the L−1 steps.
pub fn step_lengths(traj: &Trajectory) -> Vec<f64> {
    let h = traj.layer_means();
    (0..traj.layers() - 1)
        .map(|i| distance(h.row(i + 1), h.row(i)))
        .collect()
}

/// Compensated sum of [`step_lengths`].
pub fn path_length(traj: &Trajectory) -> f64 {
    compensated_sum(step_lengths(traj))
}

/// Signed torsion of three consecutive steps, ℓ = 2..L−2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorsionProfile {
    pub tau: Vec<f64>,
    /// True where the three steps span fewer than 3 dimensions; `tau` is 0 there.
    pub degenerate: Vec<bool>,
}

impl TorsionProfile {
    pub const FIRST_LAYER: usize = 2;
}

/// Relative residual below which a difference vector is treated as lying
/// in the span of the previous ones.
const SPAN_TOLERANCE: f64 = 1e-12;

/// `τ_ℓ = ⟨Δh_{ℓ−1} × Δh_ℓ, Δh_{ℓ+1}⟩ / ‖Δh_{ℓ−1} × Δh_ℓ‖²`.
///
/// In three dimensions the cross product is used directly. Elsewhere the
/// three steps are Gram–Schmidt orthonormalized in order and the formula is
/// evaluated on their coordinates in that basis, which makes the result
/// non-negative. A span of dimension < 3 yields 0 with the flag set.
pub fn torsion_profile(traj: &Trajectory) -> Result<TorsionProfile> {
    require(traj, 4)?;
    let h = traj.layer_means();
    let diffs: Vec<Array1<f64>> = (0..traj.layers() - 1).map(|i| &h.row(i + 1) - &h.row(i)).collect();
    let mut tau = Vec::with_capacity(traj.layers() - 3);
    let mut degenerate = Vec::with_capacity(traj.layers() - 3);
    for i in 1..traj.layers() - 2 {
        match torsion_at(diffs[i - 1].view(), diffs[i].view(), diffs[i + 1].view()) {
            Some(t) => {
                tau.push(t);
                degenerate.push(false);
            }
            None => {
                tau.push(0.0);
                degenerate.push(true);
            }
        }
    }
    Ok(TorsionProfile { tau, degenerate })
}

fn torsion_at(a: ArrayView1<f64>, b: ArrayView1<f64>, c: ArrayView1<f64>) -> Option<f64> {
    let basis = orthonormal_span(&[a, b, c])?;
    let (u, v, w) = if a.len() == 3 {
        (to3(a), to3(b), to3(c))
    } else {
        let coords = |x: ArrayView1<f64>| -> [f64; 3] {
            [
                dot(x, basis[0].view()),
                dot(x, basis[1].view()),
                dot(x, basis[2].view()),
            ]
        };
        (coords(a), coords(b), coords(c))
    };
    let cr = cross(u, v);
    let denom = cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2];
    if denom == 0.0 {
        return None;
    }
    Some((cr[0] * w[0] + cr[1] * w[1] + cr[2] * w[2]) / denom)
}

fn to3(x: ArrayView1<f64>) -> [f64; 3] {
    [x[0], x[1], x[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Modified Gram–Schmidt with one re-orthogonalization pass. Returns `None`
/// if any vector is (relatively) dependent on its predecessors.
fn orthonormal_span(vectors: &[ArrayView1<f64>]) -> Option<Vec<Array1<f64>>> {
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let original = norm(*v);
        if original == 0.0 {
            return None;
        }
        let mut r = v.to_owned();
        for _ in 0..2 {
            for e in &basis {
                let p = dot(r.view(), e.view());
                r.scaled_add(-p, e);
            }
        }
        let rn = norm(r.view());
        if rn <= SPAN_TOLERANCE * original {
            return None;
        }
        basis.push(r / rn);
    }
    Some(basis)
}

/// Degree floor added to every node so isolated tokens do not divide by zero.
pub const DEGREE_FLOOR: f64 = 1e-12;

/// Symmetric normalized Laplacian `I − D^{-1/2} W D^{-1/2}` of the clipped
/// cosine-similarity graph over the rows of `tokens`.
pub fn token_graph_laplacian(tokens: ArrayView2<f64>) -> Result<Array2<f64>> {
    let t = tokens.nrows();
    if t < 2 {
        return Err(Error::precondition(format!(
            "token graph needs at least 2 tokens, got {t}"
        )));
    }
    let norms: Vec<f64> = tokens.rows().into_iter().map(norm).collect();
    let mut w = Array2::<f64>::zeros((t, t));
    for i in 0..t {
        for j in (i + 1)..t {
            let cos = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                dot(tokens.row(i), tokens.row(j)) / (norms[i] * norms[j])
            };
            let wij = cos.max(0.0);
            w[[i, j]] = wij;
            w[[j, i]] = wij;
        }
    }
    let degree: Vec<f64> = w.rows().into_iter().map(|r| r.sum() + DEGREE_FLOOR).collect();
    let mut lap = Array2::<f64>::zeros((t, t));
    for i in 0..t {
        for j in 0..t {
            lap[[i, j]] = if i == j {
                1.0
            } else {
                -w[[i, j]] / (degree[i] * degree[j]).sqrt()
            };
        }
    }
    Ok(lap)
}

/// Per-layer spectral statistics of the token similarity graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplacianCurvature {
    /// `λ₂ / λ_max` per layer (0 when `λ_max < 1e-12`).
    pub ratio: Vec<f64>,
    /// Mean of `λ₂ … λ_{k+1}` per layer.
    pub mean_k: Vec<f64>,
    pub k: usize,
}

/// Ascending eigenvalues of the token Laplacian at one layer.
pub fn layer_laplacian_spectrum(tokens: ArrayView2<f64>) -> Result<Vec<f64>> {
    let lap = token_graph_laplacian(tokens)?;
    Ok(jacobi_eigen(lap.view())?.values)
}

pub fn laplacian_spectral_curvature(traj: &Trajectory, k: usize) -> Result<LaplacianCurvature> {
    let t = traj.tokens();
    if traj.token_states().is_none() {
        return Err(Error::precondition("Laplacian curvature needs token_states"));
    }
    if k < 1 || k + 1 > t {
        return Err(Error::precondition(format!(
            "k must satisfy 1 ≤ k ≤ T−1 = {}, got {k}",
            t.saturating_sub(1)
        )));
    }
    let per_layer: Vec<Result<(f64, f64)>> = par::map_range(traj.layers(), |l| {
        let tokens = traj.layer_tokens(l).expect("token states checked above");
        let spectrum = layer_laplacian_spectrum(tokens)?;
        let max = *spectrum.last().expect("T ≥ 2");
        let ratio = if max < 1e-12 { 0.0 } else { spectrum[1] / max };
        let mean = spectrum[1..=k].iter().sum::<f64>() / k as f64;
        Ok((ratio, mean))
    });
    let mut ratio = Vec::with_capacity(traj.layers());
    let mut mean_k = Vec::with_capacity(traj.layers());
    for r in per_layer {
        let (a, b) = r?;
        ratio.push(a);
        mean_k.push(b);
    }
    Ok(LaplacianCurvature { ratio, mean_k, k })
}
