//! Composite scoring and assembly of the per-layer diagnostics profile.
//!
//! Every per-layer series in a [`DiagnosticsProfile`] lives on layers
//! `2..=L−1` (1-based), where the second-difference curvature is defined.
//! Missing components are `None`, never zero-filled.

use serde::Serialize;

use crate::belief::{belief_field, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::geometry::{laplacian_spectral_curvature, second_diff_curvature, step_lengths, torsion_profile};
use crate::linalg::CompensatedSum;
use crate::par;
use crate::thermo::thermo_profile;
use crate::trajectory::{require, GradientBundle, Provenance, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Uniform,
    /// `ω_ℓ ∝ ℓ`
    Ramp,
    /// `1/k` on the last `k` layers.
    LastK(usize),
    /// `ω ≡ 1`, unnormalized. Reproduces plain per-layer sums.
    Unit,
}

impl WeightScheme {
    pub fn is_normalized(self) -> bool {
        !matches!(self, WeightScheme::Unit)
    }

    pub fn label(self) -> String {
        match self {
            WeightScheme::Uniform => "uniform".into(),
            WeightScheme::Ramp => "ramp".into(),
            WeightScheme::LastK(k) => format!("last_{k}"),
            WeightScheme::Unit => "unit".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureSource {
    SecondDiff,
    LaplacianRatio,
    LaplacianMeanK,
}

impl CurvatureSource {
    pub fn label(self) -> &'static str {
        match self {
            CurvatureSource::SecondDiff => "second_diff",
            CurvatureSource::LaplacianRatio => "laplacian_ratio",
            CurvatureSource::LaplacianMeanK => "laplacian_mean_k",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub weights: WeightScheme,
    /// `(a, b, c)` for `Σ (aκ + bℒ + c‖v‖) Δs`.
    pub additive: [f64; 3],
    pub curvature: CurvatureSource,
    /// `k` for the Laplacian mean-k curvature.
    pub laplacian_k: usize,
    /// Sectors for direction entropy.
    pub bins: usize,
}

pub const DEFAULT_LAST_K: usize = 10;

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            weights: WeightScheme::Uniform,
            additive: [1.0, 1.0, 1.0],
            curvature: CurvatureSource::SecondDiff,
            laplacian_k: 1,
            bins: DEFAULT_BINS,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.additive.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("additive coefficients must be finite and ≥ 0".into()));
        }
        if let WeightScheme::LastK(0) = self.weights {
            return Err(Error::Config("last_k needs k ≥ 1".into()));
        }
        if self.bins < 2 {
            return Err(Error::Config("direction entropy needs ≥ 2 bins".into()));
        }
        Ok(())
    }
}

/// Layer weights for `layers` layers under `scheme`.
pub fn layer_weights(scheme: WeightScheme, layers: usize) -> Result<Vec<f64>> {
    if layers < 1 {
        return Err(Error::precondition("need at least one layer"));
    }
    let l = layers as f64;
    Ok(match scheme {
        WeightScheme::Uniform => vec![1.0 / l; layers],
        WeightScheme::Ramp => {
            let total = l * (l + 1.0) / 2.0;
            (1..=layers).map(|i| i as f64 / total).collect()
        }
        WeightScheme::LastK(k) => {
            if k == 0 || k > layers {
                return Err(Error::precondition(format!(
                    "last_k needs 1 ≤ k ≤ L = {layers}, got {k}"
                )));
            }
            let mut w = vec![0.0; layers];
            w[layers - k..].iter_mut().for_each(|x| *x = 1.0 / k as f64);
            w
        }
        WeightScheme::Unit => vec![1.0; layers],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdnaScore {
    /// `κ_ℓ · ℒ_ℓ · ‖v_ℓ‖`, absent where any factor is absent.
    pub per_layer: Vec<Option<f64>>,
    pub total: f64,
    /// Weights actually applied (0 at skipped indices).
    pub weights: Vec<f64>,
}

/// `Σ ω_ℓ κ_ℓ ℒ_ℓ ‖v_ℓ‖` over indices where all three series are present.
/// With `renormalize`, the weights of the evaluated indices are rescaled to
/// sum to 1.
pub fn ndna_score(
    kappa: &[Option<f64>],
    length: &[Option<f64>],
    v_norm: &[Option<f64>],
    weights: &[f64],
    renormalize: bool,
) -> Result<NdnaScore> {
    let n = kappa.len();
    if length.len() != n || v_norm.len() != n || weights.len() != n {
        return Err(Error::precondition("κ, ℒ, ‖v‖ and weights must share one index range"));
    }
    let per_layer: Vec<Option<f64>> = (0..n).map(|i| Some(kappa[i]? * length[i]? * v_norm[i]?)).collect();
    if per_layer.iter().all(Option::is_none) {
        return Err(Error::precondition("no layer has all of κ, ℒ and ‖v‖ available"));
    }
    let mut used: Vec<f64> = per_layer
        .iter()
        .zip(weights)
        .map(|(p, &w)| if p.is_some() { w } else { 0.0 })
        .collect();
    if renormalize {
        let s: f64 = used.iter().sum();
        if s <= 0.0 {
            return Err(Error::precondition("weights vanish on every evaluable layer"));
        }
        used.iter_mut().for_each(|w| *w /= s);
    }
    let mut total = CompensatedSum::new();
    for (p, w) in per_layer.iter().zip(&used) {
        if let Some(p) = p {
            total.add(w * p);
        }
    }
    Ok(NdnaScore {
        per_layer,
        total: total.total(),
        weights: used,
    })
}

/// `Σ (aκ_ℓ + bℒ_ℓ + c‖v_ℓ‖) Δs_ℓ`. Series with a zero coefficient may be
/// absent; an index is skipped when a needed series is absent there.
pub fn additive_score(
    kappa: &[Option<f64>],
    length: &[Option<f64>],
    v_norm: &[Option<f64>],
    steps: &[f64],
    coeffs: [f64; 3],
) -> Result<f64> {
    let n = kappa.len();
    if length.len() != n || v_norm.len() != n || steps.len() != n {
        return Err(Error::precondition(
            "κ, ℒ, ‖v‖ and step series must share one index range",
        ));
    }
    let [a, b, c] = coeffs;
    let term = |coef: f64, x: Option<f64>| -> Option<f64> {
        if coef == 0.0 {
            Some(0.0)
        } else {
            x.map(|x| coef * x)
        }
    };
    let mut total = CompensatedSum::new();
    let mut evaluated = 0;
    for i in 0..n {
        let (Some(tk), Some(tl), Some(tv)) = (term(a, kappa[i]), term(b, length[i]), term(c, v_norm[i])) else {
            continue;
        };
        total.add((tk + tl + tv) * steps[i]);
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::precondition(
            "additive score has no layer with the required series",
        ));
    }
    Ok(total.total())
}

/// Per-layer diagnostics and scalar aggregates for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsProfile {
    pub model_id: String,
    /// 1-based layer numbers, `2..=L−1`.
    pub layer: Vec<usize>,
    pub kappa: Vec<Option<f64>>,
    pub step_len: Vec<Option<f64>>,
    #[serde(rename = "L")]
    pub length: Vec<Option<f64>>,
    pub tau: Vec<Option<f64>>,
    pub v_norm: Vec<Option<f64>>,
    pub cos_theta: Vec<Option<f64>>,
    pub ndna: Vec<Option<f64>>,
    pub weights: Vec<f64>,
    pub ndna_total: Option<f64>,
    pub additive_score: Option<f64>,
    pub path_length: f64,
    pub fisher_length: f64,
    pub fisher_energy: f64,
    pub length_source: String,
    pub curvature_source: String,
    pub weight_scheme: String,
    pub provenance: Provenance,
}

pub const CSV_COLUMNS: [&str; 8] = ["layer", "kappa", "step_len", "L", "tau", "v_norm", "cos_theta", "ndna"];

impl DiagnosticsProfile {
    fn columns(&self) -> [(&'static str, &Vec<Option<f64>>); 7] {
        [
            ("kappa", &self.kappa),
            ("step_len", &self.step_len),
            ("L", &self.length),
            ("tau", &self.tau),
            ("v_norm", &self.v_norm),
            ("cos_theta", &self.cos_theta),
            ("ndna", &self.ndna),
        ]
    }

    /// One row per layer; absent values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        let cols = self.columns();
        for (i, layer) in self.layer.iter().enumerate() {
            out.push_str(&layer.to_string());
            for (_, col) in &cols {
                out.push(',');
                if let Some(v) = col[i] {
                    out.push_str(&crate::report::fmt_f64(v));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Long-form `metric,layer,value` series for external plotting.
    pub fn plot_series(&self) -> String {
        let mut out = String::from("metric,layer,value\n");
        for (name, col) in self.columns() {
            for (layer, v) in self.layer.iter().zip(col.iter()) {
                if let Some(v) = v {
                    out.push_str(&format!("{name},{layer},{}\n", crate::report::fmt_f64(*v)));
                }
            }
        }
        out
    }
}

/// Runs geometry, thermo and belief per `cfg` and assembles the profile.
pub fn assemble_profile(
    traj: &Trajectory,
    grads: Option<&GradientBundle>,
    cfg: &ScoreConfig,
) -> Result<DiagnosticsProfile> {
    cfg.validate()?;
    require(traj, 3)?;
    if let Some(g) = grads {
        g.check_against(traj)?;
    }
    let l = traj.layers();
    let range: Vec<usize> = (1..l - 1).collect(); // 0-based layer indices

    let kappa_all: Vec<f64> = match cfg.curvature {
        CurvatureSource::SecondDiff => {
            let mut k = vec![0.0];
            k.extend(second_diff_curvature(traj)?.kappa);
            k
        }
        CurvatureSource::LaplacianRatio | CurvatureSource::LaplacianMeanK => {
            if traj.token_states().is_none() {
                return Err(Error::Config(format!(
                    "curvature source {} needs token_states",
                    cfg.curvature.label()
                )));
            }
            let lc = laplacian_spectral_curvature(traj, cfg.laplacian_k)?;
            if cfg.curvature == CurvatureSource::LaplacianRatio {
                lc.ratio
            } else {
                lc.mean_k
            }
        }
    };
    let kappa: Vec<Option<f64>> = range.iter().map(|&j| Some(kappa_all[j])).collect();

    let steps = step_lengths(traj);
    let step_len: Vec<Option<f64>> = range.iter().map(|&j| Some(steps[j])).collect();

    let thermo = thermo_profile(traj, grads)?;
    let (length, length_source) = match &thermo.theta_length {
        Some(t) => (range.iter().map(|&j| Some(t.sum[j])).collect::<Vec<_>>(), "theta_grad"),
        None => (step_len.clone(), "euclid_step"),
    };

    let tau: Vec<Option<f64>> = if l >= 4 {
        let tp = torsion_profile(traj)?;
        range.iter().map(|&j| tp.tau.get(j - 1).copied()).collect()
    } else {
        vec![None; range.len()]
    };

    let belief = match grads {
        Some(g) if g.hidden_grads().is_some() => Some(belief_field(traj, g, cfg.bins)?),
        _ => None,
    };
    let v_norm: Vec<Option<f64>> = range.iter().map(|&j| belief.as_ref().map(|b| b.norm[j])).collect();
    let cos_theta: Vec<Option<f64>> = range
        .iter()
        .map(|&j| belief.as_ref().filter(|b| b.cos_defined[j]).map(|b| b.cos_theta[j]))
        .collect();

    let all_weights = layer_weights(cfg.weights, l)?;
    let weights_in_range: Vec<f64> = range.iter().map(|&j| all_weights[j]).collect();
    let (ndna, ndna_total, weights) =
        match ndna_score(&kappa, &length, &v_norm, &weights_in_range, cfg.weights.is_normalized()) {
            Ok(s) => (s.per_layer, Some(s.total), s.weights),
            Err(Error::Precondition(_)) => (vec![None; range.len()], None, weights_in_range),
            Err(e) => return Err(e),
        };
    let range_steps: Vec<f64> = range.iter().map(|&j| steps[j]).collect();
    let additive = match additive_score(&kappa, &length, &v_norm, &range_steps, cfg.additive) {
        Ok(s) => Some(s),
        Err(Error::Precondition(_)) => None,
        Err(e) => return Err(e),
    };

    let mut provenance = traj.provenance().clone();
    provenance.insert("length_source".into(), length_source.into());
    provenance.insert("curvature_source".into(), cfg.curvature.label().into());

    Ok(DiagnosticsProfile {
        model_id: traj.model_id().to_string(),
        layer: range.iter().map(|j| j + 1).collect(),
        kappa,
        step_len,
        length,
        tau,
        v_norm,
        cos_theta,
        ndna,
        weights,
        ndna_total,
        additive_score: additive,
        path_length: thermo.euclid_length,
        fisher_length: thermo.fisher.length,
        fisher_energy: thermo.fisher.energy,
        length_source: length_source.into(),
        curvature_source: cfg.curvature.label().into(),
        weight_scheme: cfg.weights.label(),
        provenance,
    })
}

/// Assembles many profiles concurrently; results keep input order.
pub fn assemble_profiles(
    inputs: &[(&Trajectory, Option<&GradientBundle>)],
    cfg: &ScoreConfig,
) -> Vec<Result<DiagnosticsProfile>> {
    par::map_slice(inputs, |(t, g)| assemble_profile(t, *g, cfg))
}
