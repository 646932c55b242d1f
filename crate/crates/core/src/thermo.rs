//! Thermodynamic-length family: per-layer gradient energies and the
//! Fisher-weighted length of the trajectory.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::path_length;
use crate::linalg::{compensated_sum, CompensatedSum};
use crate::par;
use crate::trajectory::{GradientBundle, Trajectory};

/// Per-layer `ℒ_ℓ = Σ_x ‖∇_θ log p_ℓ(x)‖²` and the matching mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaLength {
    pub sum: Vec<f64>,
    pub mean: Vec<f64>,
    pub samples: usize,
}

pub fn theta_length_profile(grads: &GradientBundle) -> Result<ThetaLength> {
    let sq = grads
        .theta_grad_sqnorms()
        .ok_or_else(|| Error::precondition("theta_grad_sqnorms are required"))?;
    let n = sq.nrows();
    let sum: Vec<f64> = sq
        .columns()
        .into_iter()
        .map(|c| compensated_sum(c.iter().copied()))
        .collect();
    let mean = sum.iter().map(|s| s / n as f64).collect();
    Ok(ThetaLength { sum, mean, samples: n })
}

/// Empirical Fisher metric at one layer with its regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMetric {
    pub matrix: Array2<f64>,
    pub reg: f64,
}

/// `G = (1/N) Σ g gᵀ + λI` with `λ = 1e-8 · tr(G_raw)/D` (or `1e-8` when
/// the trace is 0).
pub fn empirical_fisher(grads: &GradientBundle, layer: usize) -> Result<FisherMetric> {
    let g = grads
        .layer_grads(layer)
        .ok_or_else(|| Error::precondition("hidden_grads are required"))?;
    let (n, d) = g.dim();
    let mut m = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in i..d {
            let mut acc = CompensatedSum::new();
            for s in 0..n {
                acc.add(g[[s, i]] * g[[s, j]]);
            }
            let v = acc.total() / n as f64;
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    let trace: f64 = (0..d).map(|i| m[[i, i]]).sum();
    let reg = if trace == 0.0 { 1e-8 } else { 1e-8 * trace / d as f64 };
    for i in 0..d {
        m[[i, i]] += reg;
    }
    Ok(FisherMetric { matrix: m, reg })
}

/// Fisher-weighted length and energy of the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherLength {
    /// `Σ_ℓ sqrt(Δh_ℓᵀ G_ℓ Δh_ℓ)`
    pub length: f64,
    /// `Σ_ℓ Δh_ℓᵀ G_ℓ Δh_ℓ`
    pub energy: f64,
    /// Regularizer per step (empty when no gradients were used).
    pub reg: Vec<f64>,
    pub metric: MetricSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    Identity,
    EmpiricalFisher,
}

/// Step `ℓ → ℓ+1` is measured with the Fisher metric of layer `ℓ`. Without
/// hidden-state gradients the metric is the identity and the length equals
/// [`path_length`].
pub fn fisher_path_length(traj: &Trajectory, grads: Option<&GradientBundle>) -> Result<FisherLength> {
    let hidden = grads.filter(|g| g.hidden_grads().is_some());
    let Some(grads) = hidden else {
        let length = path_length(traj);
        let energy = compensated_sum(crate::geometry::step_lengths(traj).into_iter().map(|s| s * s));
        return Ok(FisherLength {
            length,
            energy,
            reg: Vec::new(),
            metric: MetricSource::Identity,
        });
    };
    grads.check_against(traj)?;
    let h = traj.layer_means();
    let steps: Vec<Result<(f64, f64)>> = par::map_range(traj.layers() - 1, |l| {
        let g = empirical_fisher(grads, l)?;
        let delta = &h.row(l + 1) - &h.row(l);
        let q = delta.dot(&g.matrix.dot(&delta));
        Ok((q.max(0.0), g.reg))
    });
    let mut length = CompensatedSum::new();
    let mut energy = CompensatedSum::new();
    let mut reg = Vec::with_capacity(steps.len());
    for s in steps {
        let (q, r) = s?;
        length.add(q.sqrt());
        energy.add(q);
        reg.push(r);
    }
    Ok(FisherLength {
        length: length.total(),
        energy: energy.total(),
        reg,
        metric: MetricSource::EmpiricalFisher,
    })
}

/// Everything in the thermodynamic family for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermoProfile {
    pub theta_length: Option<ThetaLength>,
    pub euclid_length: f64,
    pub fisher: FisherLength,
}

pub fn thermo_profile(traj: &Trajectory, grads: Option<&GradientBundle>) -> Result<ThermoProfile> {
    let theta_length = match grads {
        Some(g) if g.theta_grad_sqnorms().is_some() => {
            g.check_against(traj)?;
            Some(theta_length_profile(g)?)
        }
        _ => None,
    };
    Ok(ThermoProfile {
        theta_length,
        euclid_length: path_length(traj),
        fisher: fisher_path_length(traj, grads)?,
    })
}
