//! Layerwise hidden-state trajectories and their gradient companions.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2};

use crate::error::{require_layers, Error, Result};
use crate::linalg::{centroid, compensated_sum};

/// Free-form key/value metadata (seed, source, pooling rule, …).
pub type Provenance = BTreeMap<String, String>;

/// Ordered per-layer hidden-state means, optionally with per-token states.
///
/// Rows of `layer_means` are layers in forward order. Layers are exposed
/// 0-based in this API; reports convert to 1-based layer numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    model_id: String,
    layer_means: Array2<f64>,
    token_states: Option<Array3<f64>>,
    provenance: Provenance,
}

impl Trajectory {
    /// Builds a trajectory from an `L × D` matrix, checking `L ≥ 2`, `D ≥ 1`
    /// and finiteness.
    pub fn new(model_id: impl Into<String>, layer_means: Array2<f64>) -> Result<Self> {
        let (l, d) = layer_means.dim();
        if l < 2 {
            return Err(Error::Invariant(format!("trajectory needs at least 2 layers, got {l}")));
        }
        if d < 1 {
            return Err(Error::Invariant("trajectory dimension must be ≥ 1".into()));
        }
        check_finite(layer_means.iter(), "layer_means")?;
        Ok(Self {
            model_id: model_id.into(),
            layer_means: layer_means.as_standard_layout().into_owned(),
            token_states: None,
            provenance: Provenance::new(),
        })
    }

    /// Builds from a list of per-layer vectors.
    pub fn from_rows(model_id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let l = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Invariant("all layer vectors must share one dimension".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = Array2::from_shape_vec((l, d), flat).map_err(|e| Error::Invariant(e.to_string()))?;
        Self::new(model_id, m)
    }

    /// Attaches `L × T × D` token states.
    pub fn with_token_states(mut self, tokens: Array3<f64>) -> Result<Self> {
        let (l, t, d) = tokens.dim();
        if l != self.layers() || d != self.dim() {
            return Err(Error::Invariant(format!(
                "token_states shape {l}x{t}x{d} does not match trajectory {}x_x{}",
                self.layers(),
                self.dim()
            )));
        }
        if t < 1 {
            return Err(Error::Invariant("token count must be ≥ 1".into()));
        }
        check_finite(tokens.iter(), "token_states")?;
        self.token_states = Some(tokens.as_standard_layout().into_owned());
        Ok(self)
    }

    pub fn with_provenance(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.provenance.insert(key.into(), value.into());
        self
    }

    pub fn set_provenance(&mut self, provenance: Provenance) {
        self.provenance = provenance;
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn layers(&self) -> usize {
        self.layer_means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.layer_means.ncols()
    }

    /// Tokens per layer, 0 when no token states are attached.
    pub fn tokens(&self) -> usize {
        self.token_states.as_ref().map_or(0, |t| t.dim().1)
    }

    pub fn layer_means(&self) -> ArrayView2<'_, f64> {
        self.layer_means.view()
    }

    pub fn layer(&self, index: usize) -> ArrayView1<'_, f64> {
        self.layer_means.row(index)
    }

    pub fn token_states(&self) -> Option<&Array3<f64>> {
        self.token_states.as_ref()
    }

    /// `T × D` token matrix at a 0-based layer.
    pub fn layer_tokens(&self, index: usize) -> Option<ArrayView2<'_, f64>> {
        self.token_states.as_ref().map(|t| t.slice(s![index, .., ..]))
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Same trajectory with every layer mean mapped through `f`; token states
    /// are dropped.
    pub fn map_layers<F>(&self, model_id: impl Into<String>, f: F) -> Result<Trajectory>
    where
        F: Fn(ArrayView1<f64>) -> Array1<f64>,
    {
        let mut out = Array2::<f64>::zeros((self.layers(), 0));
        for (i, row) in self.layer_means.rows().into_iter().enumerate() {
            let mapped = f(row);
            if i == 0 {
                out = Array2::zeros((self.layers(), mapped.len()));
            }
            out.row_mut(i).assign(&mapped);
        }
        let mut t = Trajectory::new(model_id, out)?;
        t.provenance = self.provenance.clone();
        Ok(t)
    }
}

/// Per-sample gradients paired with a trajectory.
///
/// `hidden_grads` is `N × L × D` (∇ₕ log p per sample and layer);
/// `theta_grad_sqnorms` is `N × L` (squared parameter-gradient norms).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    hidden_grads: Option<Array3<f64>>,
    theta_grad_sqnorms: Option<Array2<f64>>,
    sample_ids: Vec<String>,
}

impl GradientBundle {
    /// Validates the bundle on its own: at least one array, consistent `N`,
    /// finite entries, non-negative squared norms. Empty `sample_ids` are
    /// filled with `"0"`, `"1"`, ….
    pub fn new(
        hidden_grads: Option<Array3<f64>>,
        theta_grad_sqnorms: Option<Array2<f64>>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let n_hidden = hidden_grads.as_ref().map(|h| h.dim().0);
        let n_theta = theta_grad_sqnorms.as_ref().map(|t| t.dim().0);
        let n = match (n_hidden, n_theta) {
            (None, None) => {
                return Err(Error::Invariant(
                    "gradient bundle needs hidden_grads or theta_grad_sqnorms".into(),
                ))
            }
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Invariant(format!(
                    "hidden_grads has {a} samples but theta_grad_sqnorms has {b}"
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
        };
        if n == 0 {
            return Err(Error::Invariant("gradient bundle has no samples".into()));
        }
        if let (Some(h), Some(t)) = (&hidden_grads, &theta_grad_sqnorms) {
            if h.dim().1 != t.dim().1 {
                return Err(Error::Invariant(
                    "hidden_grads and theta_grad_sqnorms disagree on layer count".into(),
                ));
            }
        }
        if let Some(h) = &hidden_grads {
            check_finite(h.iter(), "hidden_grads")?;
        }
        if let Some(t) = &theta_grad_sqnorms {
            check_finite(t.iter(), "theta_grad_sqnorms")?;
            if t.iter().any(|&x| x < 0.0) {
                return Err(Error::Invariant("theta_grad_sqnorms entries must be ≥ 0".into()));
            }
        }
        let sample_ids = if sample_ids.is_empty() {
            (0..n).map(|i| i.to_string()).collect()
        } else if sample_ids.len() != n {
            return Err(Error::Invariant(format!(
                "{} sample ids for {n} samples",
                sample_ids.len()
            )));
        } else {
            sample_ids
        };
        Ok(Self {
            hidden_grads: hidden_grads.map(|h| h.as_standard_layout().into_owned()),
            theta_grad_sqnorms: theta_grad_sqnorms.map(|t| t.as_standard_layout().into_owned()),
            sample_ids,
        })
    }

    /// Checks that layer count and dimension agree with `traj`.
    pub fn check_against(&self, traj: &Trajectory) -> Result<()> {
        if let Some(h) = &self.hidden_grads {
            let (_, l, d) = h.dim();
            if l != traj.layers() || d != traj.dim() {
                return Err(Error::Invariant(format!(
                    "hidden_grads are {l}x{d} per sample, trajectory is {}x{}",
                    traj.layers(),
                    traj.dim()
                )));
            }
        }
        if let Some(t) = &self.theta_grad_sqnorms {
            if t.dim().1 != traj.layers() {
                return Err(Error::Invariant(format!(
                    "theta_grad_sqnorms cover {} layers, trajectory has {}",
                    t.dim().1,
                    traj.layers()
                )));
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn hidden_grads(&self) -> Option<&Array3<f64>> {
        self.hidden_grads.as_ref()
    }

    /// `N × D` gradients at a 0-based layer.
    pub fn layer_grads(&self, layer: usize) -> Option<ArrayView2<'_, f64>> {
        self.hidden_grads.as_ref().map(|h| h.slice(s![.., layer, ..]))
    }

    pub fn theta_grad_sqnorms(&self) -> Option<&Array2<f64>> {
        self.theta_grad_sqnorms.as_ref()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub(crate) fn require_hidden(&self) -> Result<&Array3<f64>> {
        self.hidden_grads
            .as_ref()
            .ok_or_else(|| Error::precondition("hidden_grads are required"))
    }
}

fn check_finite<'a>(mut values: impl Iterator<Item = &'a f64>, what: &str) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        Err(Error::Invariant(format!("{what} contains a non-finite entry")))
    } else {
        Ok(())
    }
}

/// Piecewise-linear resampling of the layer means onto `target_layers`
/// equispaced knots of normalized depth `[0, 1]`. Endpoints are copied
/// exactly; token states are dropped.
pub fn resample_trajectory(traj: &Trajectory, target_layers: usize) -> Result<Trajectory> {
    if target_layers < 2 {
        return Err(Error::precondition(format!(
            "resample target must be ≥ 2 layers, got {target_layers}"
        )));
    }
    let l = traj.layers();
    let means = traj.layer_means();
    let mut out = Array2::<f64>::zeros((target_layers, traj.dim()));
    for m in 0..target_layers {
        let (lo, hi, frac) = knot(m, target_layers, l);
        if frac == 0.0 {
            out.row_mut(m).assign(&means.row(lo));
        } else {
            let a = means.row(lo);
            let b = means.row(hi);
            for (j, o) in out.row_mut(m).iter_mut().enumerate() {
                *o = a[j] + frac * (b[j] - a[j]);
            }
        }
    }
    let mut t = Trajectory::new(traj.model_id(), out)?;
    t.provenance = traj.provenance.clone();
    t.provenance.insert("resampled_from_layers".into(), l.to_string());
    Ok(t)
}

/// Resamples a scalar per-layer series with the same knot rule as
/// [`resample_trajectory`].
pub fn resample_series(values: &[f64], target: usize) -> Vec<f64> {
    let l = values.len();
    if l == target || l < 2 {
        return values.to_vec();
    }
    (0..target)
        .map(|m| {
            let (lo, hi, frac) = knot(m, target, l);
            if frac == 0.0 {
                values[lo]
            } else {
                values[lo] + frac * (values[hi] - values[lo])
            }
        })
        .collect()
}

/// Source segment and fraction for output knot `m` of `target` when the
/// source has `l` layers.
fn knot(m: usize, target: usize, l: usize) -> (usize, usize, f64) {
    if m == 0 {
        return (0, 0, 0.0);
    }
    if m == target - 1 {
        return (l - 1, l - 1, 0.0);
    }
    // position in source index space, computed as a ratio of integers
    let num = m * (l - 1);
    let den = target - 1;
    let lo = num / den;
    let rem = num % den;
    if rem == 0 {
        (lo, lo, 0.0)
    } else {
        (lo, lo + 1, rem as f64 / den as f64)
    }
}

/// `sqrt(mean_ℓ ‖h_ℓ − h̄‖²)` with `h̄` the mean over layers.
pub fn rms_scale(traj: &Trajectory) -> f64 {
    let raw = traj.layer_means();
    // shifting by the first layer keeps a constant trajectory exactly at 0
    let means = &raw - &raw.row(0);
    let c = centroid(means.view());
    let total = compensated_sum(
        means
            .rows()
            .into_iter()
            .map(|r| r.iter().zip(c.iter()).map(|(x, m)| (x - m) * (x - m)).sum::<f64>()),
    );
    (total / traj.layers() as f64).sqrt()
}

pub(crate) fn require(traj: &Trajectory, needed: usize) -> Result<()> {
    require_layers(traj.layers(), needed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_short_and_non_finite() {
        assert!(Trajectory::new("x", array![[1.0, 2.0]]).is_err());
        let err = Trajectory::new("x", array![[1.0], [f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn token_states_shape_checked() {
        let t = Trajectory::new("x", Array2::zeros((3, 2))).unwrap();
        assert!(t.clone().with_token_states(Array3::zeros((3, 4, 2))).is_ok());
        assert!(t.clone().with_token_states(Array3::zeros((2, 4, 2))).is_err());
        assert!(t.with_token_states(Array3::zeros((3, 0, 2))).is_err());
    }

    #[test]
    fn bundle_invariants() {
        assert!(GradientBundle::new(None, None, vec![]).is_err());
        let neg = array![[1.0, -1.0]];
        assert!(GradientBundle::new(None, Some(neg), vec![]).is_err());
        let b = GradientBundle::new(None, Some(array![[1.0, 2.0]]), vec![]).unwrap();
        assert_eq!(b.sample_ids(), ["0"]);
        let t = Trajectory::new("x", Array2::zeros((3, 2))).unwrap();
        assert!(b.check_against(&t).is_err());
    }

    #[test]
    fn resample_identity_and_midpoint() {
        let t = Trajectory::new("x", array![[0.0, 0.0], [1.0, 3.0], [2.0, -1.0]]).unwrap();
        let same = resample_trajectory(&t, 3).unwrap();
        assert_eq!(same.layer_means(), t.layer_means());

        let two = Trajectory::new("x", array![[0.0, 2.0], [4.0, 6.0]]).unwrap();
        let three = resample_trajectory(&two, 3).unwrap();
        assert_eq!(three.layer(1).to_vec(), vec![2.0, 4.0]);
        assert_eq!(three.layer(0), two.layer(0));
        assert_eq!(three.layer(2), two.layer(1));
    }

    #[test]
    fn resample_keeps_line_collinear() {
        let dir = [0.3, -0.4, 1.2];
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| dir.iter().map(|d| d * i as f64 * 0.7 + 0.1).collect())
            .collect();
        let t = Trajectory::from_rows("line", &rows).unwrap();
        let r = resample_trajectory(&t, 9).unwrap();
        let a = r.layer(0).to_owned();
        let u = &r.layer(8) - &a;
        let un = crate::linalg::norm(u.view());
        for i in 0..9 {
            let w = &r.layer(i) - &a;
            let along = crate::linalg::dot(w.view(), u.view()) / un;
            let residual = (crate::linalg::norm(w.view()).powi(2) - along * along).max(0.0).sqrt();
            assert!(residual < 1e-12, "layer {i}: {residual}");
        }
    }

    #[test]
    fn resample_rejects_tiny_target() {
        let t = Trajectory::new("x", Array2::zeros((3, 2))).unwrap();
        assert!(matches!(resample_trajectory(&t, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn rms_scale_examples() {
        let c = Trajectory::new("c", array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert_eq!(rms_scale(&c), 0.0);
        let pm = Trajectory::new("pm", array![[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(rms_scale(&pm), 1.0);
    }

    #[test]
    fn series_resample_matches_trajectory_rule() {
        let v = [0.0, 1.0, 4.0, 9.0];
        let r = resample_series(&v, 7);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[6], 9.0);
        assert_eq!(r[2], 1.0);
        assert_eq!(r[1], 0.5);
    }
}
