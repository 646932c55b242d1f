//! Cross-model diagnostics: merged offspring, distillation, distortion,
//! output divergence and collapse classification.

use ndarray::{Array2, Array3, ArrayView2, Zip};
use serde::Serialize;

use crate::belief::{belief_field, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::geometry::{path_length, second_diff_curvature, step_lengths};
use crate::linalg::{compensated_sum, distance};
use crate::par;
use crate::topology::{effective_rank, max_lifetime, rips_persistence, MAX_POINTS_DIM0};
use crate::trajectory::{require, resample_series, resample_trajectory, rms_scale, GradientBundle, Trajectory};

/// `α·x + (1−α)·y`, returning `x` unchanged when `x == y` so identical
/// inputs and `α ∈ {0, 1}` reproduce the parents bit for bit.
fn blend(alpha: f64, x: f64, y: f64) -> f64 {
    if x == y {
        x
    } else {
        alpha * x + (1.0 - alpha) * y
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::precondition(format!(
            "merge ratio must lie in [0, 1], got {alpha}"
        )))
    }
}

fn same_shape(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.layers() != b.layers() || a.dim() != b.dim() {
        return Err(Error::precondition(format!(
            "trajectories differ in shape: {}×{} vs {}×{} (resample first)",
            a.layers(),
            a.dim(),
            b.layers(),
            b.dim()
        )));
    }
    Ok(())
}

/// `h_ℓ = α h_ℓ^A + (1−α) h_ℓ^B`. Token states are blended too when both
/// parents carry them with the same token count.
pub fn merge_trajectories(a: &Trajectory, b: &Trajectory, alpha: f64) -> Result<Trajectory> {
    check_alpha(alpha)?;
    same_shape(a, b)?;
    let means = Zip::from(&a.layer_means())
        .and(&b.layer_means())
        .map_collect(|&x, &y| blend(alpha, x, y));
    let mut merged = Trajectory::new(format!("merge({},{})", a.model_id(), b.model_id()), means)?
        .with_provenance("merge_alpha", alpha.to_string())
        .with_provenance("merge_parent_a", a.model_id())
        .with_provenance("merge_parent_b", b.model_id());
    if let (Some(ta), Some(tb)) = (a.token_states(), b.token_states()) {
        if ta.dim() == tb.dim() {
            let tokens: Array3<f64> = Zip::from(ta).and(tb).map_collect(|&x, &y| blend(alpha, x, y));
            merged = merged.with_token_states(tokens)?;
        }
    }
    Ok(merged)
}

/// Per-sample hidden-state gradients blended with ratio `alpha`.
pub fn blend_gradients(a: &GradientBundle, b: &GradientBundle, alpha: f64) -> Result<GradientBundle> {
    check_alpha(alpha)?;
    let ga = a.require_hidden()?;
    let gb = b.require_hidden()?;
    if ga.dim() != gb.dim() {
        return Err(Error::precondition("parent gradient bundles differ in shape"));
    }
    let g = Zip::from(ga).and(gb).map_collect(|&x, &y| blend(alpha, x, y));
    GradientBundle::new(Some(g), None, a.sample_ids().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    ParentA,
    ParentB,
    Fused,
}

pub const DEFAULT_DOMINANCE_RATIO: f64 = 0.5;

/// Per-layer belief variances of parents and offspring.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceTriple {
    pub parent_a: Vec<f64>,
    pub parent_b: Vec<f64>,
    pub offspring: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeReport {
    pub alpha: f64,
    pub rho: f64,
    pub delta_l_a: f64,
    pub delta_l_b: f64,
    pub dominance: Dominance,
    /// Layers `2..=L−1`.
    pub delta_kappa: Vec<f64>,
    /// Absent without parent gradients.
    pub clash: Option<bool>,
    pub variance: Option<VarianceTriple>,
}

/// Parent gradients for the clash test, and optionally the offspring's own.
#[derive(Debug, Clone, Copy, Default)]
pub struct MergeGradients<'a> {
    pub parent_a: Option<&'a GradientBundle>,
    pub parent_b: Option<&'a GradientBundle>,
    pub offspring: Option<&'a GradientBundle>,
}

pub fn merge_report(
    a: &Trajectory,
    b: &Trajectory,
    alpha: f64,
    grads: MergeGradients<'_>,
    rho: f64,
) -> Result<MergeReport> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Config(format!("dominance ratio must be > 0, got {rho}")));
    }
    let child = merge_trajectories(a, b, alpha)?;
    require(&child, 3)?;
    let sum_dist =
        |x: &Trajectory, y: &Trajectory| compensated_sum((0..x.layers()).map(|l| distance(x.layer(l), y.layer(l))));
    let delta_l_a = sum_dist(&child, a);
    let delta_l_b = sum_dist(&child, b);
    let dominance = if delta_l_a < rho * delta_l_b {
        Dominance::ParentA
    } else if delta_l_b < rho * delta_l_a {
        Dominance::ParentB
    } else {
        Dominance::Fused
    };

    let ka = second_diff_curvature(a)?.kappa;
    let kb = second_diff_curvature(b)?.kappa;
    let kc = second_diff_curvature(&child)?.kappa;
    let delta_kappa = kc
        .iter()
        .zip(ka.iter().zip(&kb))
        .map(|(&c, (&x, &y))| (c - blend(alpha, x, y)).abs())
        .collect();

    let (clash, variance) = match (grads.parent_a, grads.parent_b) {
        (Some(ga), Some(gb)) if ga.hidden_grads().is_some() && gb.hidden_grads().is_some() => {
            let blended;
            let gc = match grads.offspring {
                Some(g) => g,
                None => {
                    blended = blend_gradients(ga, gb, alpha)?;
                    &blended
                }
            };
            let va = belief_field(a, ga, DEFAULT_BINS)?.variance;
            let vb = belief_field(b, gb, DEFAULT_BINS)?.variance;
            let vc = belief_field(&child, gc, DEFAULT_BINS)?.variance;
            let exceed = (0..vc.len()).filter(|&l| vc[l] > va[l].max(vb[l])).count();
            let clash = 2 * exceed > vc.len();
            (
                Some(clash),
                Some(VarianceTriple {
                    parent_a: va,
                    parent_b: vb,
                    offspring: vc,
                }),
            )
        }
        _ => (None, None),
    };

    Ok(MergeReport {
        alpha,
        rho,
        delta_l_a,
        delta_l_b,
        dominance,
        delta_kappa,
        clash,
        variance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistillReport {
    pub teacher_layers: usize,
    pub student_layers: usize,
    /// `ℒ^S / ℒ^T` on the raw trajectories; absent when `ℒ^T = 0`.
    pub r_length: Option<f64>,
    /// `mean κ^S / mean κ^T` on the raw trajectories; absent when the
    /// teacher is straight.
    pub r_kappa: Option<f64>,
    /// `ℒ^T − ℒ^S` on the raw trajectories.
    pub delta_length: f64,
    /// Depth both profiles are compared at.
    pub profile_layers: usize,
    /// Teacher-minus-student step lengths after resampling.
    pub delta_step_profile: Vec<f64>,
    /// Teacher-minus-student curvature after resampling (layers `2..=M−1`).
    pub delta_kappa_profile: Vec<f64>,
    /// `‖v^S‖ / ‖v^T‖` per layer after resampling; entries are absent where
    /// the teacher norm is 0. Absent without gradients on both sides.
    pub belief_norm_ratio: Option<Vec<Option<f64>>>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

pub fn distill_report(
    teacher: &Trajectory,
    teacher_grads: Option<&GradientBundle>,
    student: &Trajectory,
    student_grads: Option<&GradientBundle>,
) -> Result<DistillReport> {
    require(teacher, 3)?;
    require(student, 3)?;
    if teacher.dim() != student.dim() {
        return Err(Error::precondition(format!(
            "teacher and student widths differ: {} vs {}",
            teacher.dim(),
            student.dim()
        )));
    }
    let lt = path_length(teacher);
    let ls = path_length(student);
    let kt = second_diff_curvature(teacher)?.mean();
    let ks = second_diff_curvature(student)?.mean();

    let depth = teacher.layers().max(student.layers());
    let on_depth = |t: &Trajectory| -> Result<Trajectory> {
        if t.layers() == depth {
            Ok(t.clone())
        } else {
            resample_trajectory(t, depth)
        }
    };
    let rt = on_depth(teacher)?;
    let rs = on_depth(student)?;
    let delta_step_profile = step_lengths(&rt)
        .iter()
        .zip(step_lengths(&rs))
        .map(|(t, s)| t - s)
        .collect();
    let delta_kappa_profile = second_diff_curvature(&rt)?
        .kappa
        .iter()
        .zip(second_diff_curvature(&rs)?.kappa)
        .map(|(t, s)| t - s)
        .collect();

    let belief_norm_ratio = match (teacher_grads, student_grads) {
        (Some(gt), Some(gs)) if gt.hidden_grads().is_some() && gs.hidden_grads().is_some() => {
            let vt = resample_series(&belief_field(teacher, gt, DEFAULT_BINS)?.norm, depth);
            let vs = resample_series(&belief_field(student, gs, DEFAULT_BINS)?.norm, depth);
            Some(vt.iter().zip(&vs).map(|(&t, &s)| ratio(s, t)).collect())
        }
        _ => None,
    };

    Ok(DistillReport {
        teacher_layers: teacher.layers(),
        student_layers: student.layers(),
        r_length: ratio(ls, lt),
        r_kappa: ratio(ks, kt),
        delta_length: lt - ls,
        profile_layers: depth,
        delta_step_profile,
        delta_kappa_profile,
        belief_norm_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenomeDistortion {
    /// `Σ_ℓ ‖h_ℓ^Y − h_ℓ^X‖`
    pub distortion: f64,
    /// `ℒ(Y) − ℒ(X)`
    pub path_length_delta: f64,
}

pub fn genome_distortion(x: &Trajectory, y: &Trajectory) -> Result<GenomeDistortion> {
    same_shape(x, y)?;
    Ok(GenomeDistortion {
        distortion: compensated_sum((0..x.layers()).map(|l| distance(x.layer(l), y.layer(l)))),
        path_length_delta: path_length(y) - path_length(x),
    })
}

pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Mean over rows of `KL(P_i ‖ Q_i)` in nats.
pub fn output_kl(p: ArrayView2<f64>, q: ArrayView2<f64>) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::precondition(format!(
            "distribution sets differ in shape: {:?} vs {:?}",
            p.dim(),
            q.dim()
        )));
    }
    if p.nrows() == 0 || p.ncols() == 0 {
        return Err(Error::precondition("distribution sets are empty"));
    }
    for (name, m) in [("P", p), ("Q", q)] {
        for (i, row) in m.rows().into_iter().enumerate() {
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::precondition(format!(
                    "{name} row {i} has a negative or non-finite entry"
                )));
            }
            let s = compensated_sum(row.iter().copied());
            if (s - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::precondition(format!("{name} row {i} sums to {s}, not 1")));
            }
        }
    }
    let per_row: Vec<Result<f64>> = par::map_range(p.nrows(), |i| {
        let mut terms = Vec::with_capacity(p.ncols());
        for (j, (&pi, &qi)) in p.row(i).iter().zip(q.row(i).iter()).enumerate() {
            if pi == 0.0 {
                continue;
            }
            if qi == 0.0 {
                return Err(Error::precondition(format!(
                    "Q row {i} has zero mass at outcome {j} where P does not"
                )));
            }
            terms.push(pi * (pi / qi).ln());
        }
        Ok(compensated_sum(terms))
    });
    let mut values = Vec::with_capacity(per_row.len());
    for r in per_row {
        values.push(r?);
    }
    Ok(compensated_sum(values) / p.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseThresholds {
    pub length: f64,
    pub curvature: f64,
    pub belief: f64,
    pub participation_ratio: f64,
    pub lifetime: f64,
}

impl Default for CollapseThresholds {
    fn default() -> Self {
        Self {
            length: 0.01,
            curvature: 0.01,
            belief: 0.01,
            participation_ratio: 1.5,
            lifetime: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseVerdict {
    Healthy,
    HealthyWithWarnings,
    BenignCompression,
    PathologicalFlattening,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CollapseFlags {
    pub length: bool,
    pub curvature: bool,
    /// Absent without hidden-state gradients.
    pub belief: Option<bool>,
    pub rank: bool,
    pub topo: bool,
}

impl CollapseFlags {
    pub fn set_names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.length {
            out.push("length");
        }
        if self.curvature {
            out.push("curvature");
        }
        if self.belief == Some(true) {
            out.push("belief");
        }
        if self.rank {
            out.push("rank");
        }
        if self.topo {
            out.push("topo");
        }
        out
    }

    pub fn verdict(&self) -> CollapseVerdict {
        if self.length && self.curvature {
            CollapseVerdict::PathologicalFlattening
        } else if !self.length && !self.curvature && (self.rank || self.topo) {
            CollapseVerdict::BenignCompression
        } else if self.set_names().is_empty() {
            CollapseVerdict::Healthy
        } else {
            CollapseVerdict::HealthyWithWarnings
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseReport {
    pub scale: f64,
    /// `ℒ / ((L−1)·s)`; absent when `s = 0`.
    pub normalized_length: Option<f64>,
    /// `mean κ / s`; absent when `s = 0`.
    pub normalized_curvature: Option<f64>,
    /// `mean ‖v‖ / g_rms`; absent without gradients or when `g_rms = 0`.
    pub normalized_belief: Option<f64>,
    pub participation_ratio: f64,
    /// Largest finite lifetime of the layer-mean cloud over `s`.
    pub normalized_lifetime: Option<f64>,
    pub flags: CollapseFlags,
    pub warnings: Vec<&'static str>,
    pub verdict: CollapseVerdict,
}

pub fn collapse_report(
    traj: &Trajectory,
    grads: Option<&GradientBundle>,
    thresholds: &CollapseThresholds,
) -> Result<CollapseReport> {
    require(traj, 3)?;
    let s = rms_scale(traj);
    let per_scale = |x: f64| (s > 0.0).then(|| x / s);
    let l = traj.layers();
    let normalized_length = per_scale(path_length(traj) / (l - 1) as f64);
    let normalized_curvature = per_scale(second_diff_curvature(traj)?.mean());
    let pr = effective_rank(traj)?.participation_ratio;
    let normalized_lifetime = if l > MAX_POINTS_DIM0 {
        return Err(Error::TooManyPoints {
            got: l,
            cap: MAX_POINTS_DIM0,
        });
    } else {
        let diagram = rips_persistence(traj.layer_means(), 0, None, None)?;
        per_scale(max_lifetime(&diagram))
    };

    let (normalized_belief, belief_flag) = match grads {
        Some(g) if g.hidden_grads().is_some() => {
            let field = belief_field(traj, g, DEFAULT_BINS)?;
            let mean_v = field.norm.iter().sum::<f64>() / l as f64;
            let h = g.require_hidden()?;
            let n = g.samples() * l;
            let g_rms = (compensated_sum(h.iter().map(|x| x * x)) / n as f64).sqrt();
            let nb = (g_rms > 0.0).then(|| mean_v / g_rms);
            (nb, Some(nb.is_none_or(|x| x < thresholds.belief)))
        }
        _ => (None, None),
    };

    let below = |x: Option<f64>, t: f64| x.is_none_or(|x| x < t);
    let flags = CollapseFlags {
        length: below(normalized_length, thresholds.length),
        curvature: below(normalized_curvature, thresholds.curvature),
        belief: belief_flag,
        rank: pr < thresholds.participation_ratio,
        topo: below(normalized_lifetime, thresholds.lifetime),
    };
    Ok(CollapseReport {
        scale: s,
        normalized_length,
        normalized_curvature,
        normalized_belief,
        participation_ratio: pr,
        normalized_lifetime,
        warnings: flags.set_names(),
        verdict: flags.verdict(),
        flags,
    })
}

/// Element-wise `round(x / step) · step`, e.g. to emulate a quantized run.
pub fn round_to_grid(traj: &Trajectory, step: f64) -> Result<Trajectory> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::precondition(format!("grid step must be > 0, got {step}")));
    }
    let means: Array2<f64> = traj.layer_means().mapv(|x| (x / step).round() * step);
    Trajectory::new(format!("{}@grid{step}", traj.model_id()), means)
}
