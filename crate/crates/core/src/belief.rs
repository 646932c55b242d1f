//! Belief vector field statistics over per-sample hidden-state gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{path_length, second_diff_curvature};
use crate::linalg::{dot, jacobi_eigen, norm, CompensatedSum};
use crate::par;
use crate::trajectory::{GradientBundle, Trajectory};

pub const DEFAULT_BINS: usize = 16;

/// Norm threshold under which a vector counts as zero for angle purposes.
const ZERO_NORM: f64 = 1e-15;

/// Per-layer belief statistics, one entry per layer (length L).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefField {
    /// Mean gradient `v_ℓ`, `L × D`.
    #[serde(skip)]
    pub v: Array2<f64>,
    pub norm: Vec<f64>,
    pub cos_theta: Vec<f64>,
    /// False where either `v_ℓ` or the tangent is (numerically) zero.
    pub cos_defined: Vec<bool>,
    pub variance: Vec<f64>,
    pub entropy: Vec<f64>,
    pub entropy_defined: Vec<bool>,
    pub bins: usize,
}

struct LayerStats {
    mean: Array1<f64>,
    variance: f64,
    entropy: DirectionEntropy,
}

/// `v_ℓ = E[∇_{h_ℓ} log p]`, its norm, tangent alignment, total variance and
/// direction entropy.
pub fn belief_field(traj: &Trajectory, grads: &GradientBundle, bins: usize) -> Result<BeliefField> {
    grads.require_hidden()?;
    grads.check_against(traj)?;
    if bins < 2 {
        return Err(Error::precondition("direction entropy needs at least 2 bins"));
    }
    let l = traj.layers();
    let stats: Vec<Result<LayerStats>> = par::map_range(l, |layer| {
        let g = grads.layer_grads(layer).expect("checked");
        let mean = sample_mean(g);
        let variance = total_variance(g, &mean);
        let entropy = direction_entropy(g, bins)?;
        Ok(LayerStats {
            mean,
            variance,
            entropy,
        })
    });

    let h = traj.layer_means();
    let mut v = Array2::<f64>::zeros((l, traj.dim()));
    let mut out = BeliefField {
        v: Array2::zeros((0, 0)),
        norm: Vec::with_capacity(l),
        cos_theta: Vec::with_capacity(l),
        cos_defined: Vec::with_capacity(l),
        variance: Vec::with_capacity(l),
        entropy: Vec::with_capacity(l),
        entropy_defined: Vec::with_capacity(l),
        bins,
    };
    for (layer, s) in stats.into_iter().enumerate() {
        let s = s?;
        let tangent = if layer + 1 < l {
            &h.row(layer + 1) - &h.row(layer)
        } else {
            &h.row(layer) - &h.row(layer - 1)
        };
        let vn = norm(s.mean.view());
        let tn = norm(tangent.view());
        let (cos, defined) = if vn < ZERO_NORM || tn < ZERO_NORM {
            (0.0, false)
        } else {
            let c = dot(s.mean.view(), tangent.view()) / (vn * tn);
            (c.clamp(-1.0, 1.0), true)
        };
        v.row_mut(layer).assign(&s.mean);
        out.norm.push(vn);
        out.cos_theta.push(cos);
        out.cos_defined.push(defined);
        out.variance.push(s.variance);
        out.entropy.push(s.entropy.value);
        out.entropy_defined.push(s.entropy.defined);
    }
    out.v = v;
    Ok(out)
}

fn sample_mean(g: ArrayView2<f64>) -> Array1<f64> {
    let n = g.nrows() as f64;
    g.columns()
        .into_iter()
        .map(|c| {
            let mut acc = CompensatedSum::new();
            c.iter().for_each(|&x| acc.add(x));
            acc.total() / n
        })
        .collect()
}

/// `(1/N) Σ ‖g_n − v‖²`.
fn total_variance(g: ArrayView2<f64>, mean: &Array1<f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for row in g.rows() {
        acc.add(row.iter().zip(mean.iter()).map(|(x, m)| (x - m) * (x - m)).sum());
    }
    acc.total() / g.nrows() as f64
}

/// Shannon entropy of gradient directions in their top-2 principal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionEntropy {
    pub value: f64,
    /// False when every projection was zero.
    pub defined: bool,
}

/// Projects `samples` (N × D) onto the two leading principal axes of their
/// covariance, bins the nonzero projections by angle into `bins` equal
/// sectors of `[−π, π)`, and returns the natural-log entropy of the bin
/// frequencies.
pub fn direction_entropy(samples: ArrayView2<f64>, bins: usize) -> Result<DirectionEntropy> {
    let (n, d) = samples.dim();
    if n < 1 || bins < 2 {
        return Err(Error::precondition(
            "direction entropy needs N ≥ 1 samples and B ≥ 2 bins",
        ));
    }
    let axes = principal_axes(samples, 2)?;
    let max_norm = samples.rows().into_iter().map(norm).fold(0.0f64, f64::max);
    let mut counts = vec![0usize; bins];
    let mut used = 0usize;
    for row in samples.rows() {
        let x = dot(row, axes.column(0));
        let y = if d > 1 { dot(row, axes.column(1)) } else { 0.0 };
        if max_norm == 0.0 || x.hypot(y) <= 1e-12 * max_norm {
            continue;
        }
        counts[angle_bin(y.atan2(x), bins)] += 1;
        used += 1;
    }
    if used == 0 {
        return Ok(DirectionEntropy {
            value: 0.0,
            defined: false,
        });
    }
    Ok(DirectionEntropy {
        value: entropy_of_counts(&counts, used),
        defined: true,
    })
}

/// Sector index of `angle ∈ [−π, π]` among `bins` sectors of `[−π, π)`;
/// `π` wraps to sector 0.
pub fn angle_bin(angle: f64, bins: usize) -> usize {
    use std::f64::consts::PI;
    let a = if angle >= PI { -PI } else { angle };
    let idx = ((a + PI) / (2.0 * PI) * bins as f64).floor() as usize;
    idx.min(bins - 1)
}

fn entropy_of_counts(counts: &[usize], total: usize) -> f64 {
    let total = total as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Leading `k` eigenvectors (as columns, largest first) of the population
/// covariance of the rows of `samples`, sign-fixed so the first nonzero
/// coordinate is positive. Uses the `N × N` Gram matrix when `N < D`.
fn principal_axes(samples: ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
    let (n, d) = samples.dim();
    let mean = samples.mean_axis(Axis(0)).expect("N ≥ 1");
    let centered = &samples - &mean;
    let k_eff = k.min(d);
    let mut axes = Array2::<f64>::zeros((d, k));

    if n < d {
        let gram = centered.dot(&centered.t()) / n as f64;
        let eig = jacobi_eigen(gram.view())?;
        for j in 0..k_eff.min(n) {
            let col = n - 1 - j;
            let w = centered.t().dot(&eig.vectors.column(col));
            let wn = norm(w.view());
            if wn > 0.0 {
                axes.column_mut(j).assign(&(w / wn));
            }
        }
        // fill any zero axis with a coordinate direction orthogonal to the rest
        complete_axes(&mut axes, k_eff);
    } else {
        let cov = centered.t().dot(&centered) / n as f64;
        let eig = jacobi_eigen(cov.view())?;
        for j in 0..k_eff {
            axes.column_mut(j).assign(&eig.vectors.column(d - 1 - j));
        }
    }
    for j in 0..k_eff {
        let mut col = axes.column_mut(j);
        if let Some(&first) = col.iter().find(|x| **x != 0.0) {
            if first < 0.0 {
                col.mapv_inplace(|x| -x);
            }
        }
    }
    Ok(axes)
}

fn complete_axes(axes: &mut Array2<f64>, k: usize) {
    let d = axes.nrows();
    for j in 0..k {
        if norm(axes.column(j)) > 0.0 {
            continue;
        }
        for e in 0..d {
            let mut cand = Array1::<f64>::zeros(d);
            cand[e] = 1.0;
            for i in 0..k {
                if i != j {
                    let p = dot(cand.view(), axes.column(i));
                    cand.scaled_add(-p, &axes.column(i));
                }
            }
            let cn = norm(cand.view());
            if cn > 1e-8 {
                axes.column_mut(j).assign(&(cand / cn));
                break;
            }
        }
    }
}

/// One labeled input to [`per_corpus_profiles`].
#[derive(Debug, Clone, Copy)]
pub struct CorpusInput<'a> {
    pub label: &'a str,
    pub traj: &'a Trajectory,
    pub grads: Option<&'a GradientBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusRow {
    pub label: String,
    pub path_length: f64,
    /// Absent for trajectories with fewer than 3 layers.
    pub mean_kappa: Option<f64>,
    /// Absent without hidden-state gradients.
    pub mean_v_norm: Option<f64>,
}

/// Path length, mean curvature and mean belief norm per labeled corpus.
pub fn per_corpus_profiles(inputs: &[CorpusInput<'_>]) -> Result<Vec<CorpusRow>> {
    if inputs.is_empty() {
        return Err(Error::precondition("at least one labeled trajectory is required"));
    }
    par::map_slice(inputs, |input| {
        let mean_kappa = if input.traj.layers() >= 3 {
            Some(second_diff_curvature(input.traj)?.mean())
        } else {
            None
        };
        let mean_v_norm = match input.grads {
            Some(g) if g.hidden_grads().is_some() => {
                let f = belief_field(input.traj, g, DEFAULT_BINS)?;
                Some(f.norm.iter().sum::<f64>() / f.norm.len() as f64)
            }
            _ => None,
        };
        Ok(CorpusRow {
            label: input.label.to_string(),
            path_length: path_length(input.traj),
            mean_kappa,
            mean_v_norm,
        })
    })
    .into_iter()
    .collect()
}
