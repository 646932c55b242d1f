//! Seeded synthetic trajectories and a small layered model with closed-form
//! probe gradients.

use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::prng::SplitMix64;
use crate::trajectory::{GradientBundle, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Line,
    Circle,
    Helix,
    Constant,
    NoisyLine,
}

impl SynthKind {
    pub const ALL: [SynthKind; 5] = [
        SynthKind::Line,
        SynthKind::Circle,
        SynthKind::Helix,
        SynthKind::Constant,
        SynthKind::NoisyLine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Line => "line",
            SynthKind::Circle => "circle",
            SynthKind::Helix => "helix",
            SynthKind::Constant => "constant",
            SynthKind::NoisyLine => "noisy_line",
        }
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown fixture kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub layers: usize,
    pub dim: usize,
    pub step: f64,
    pub radius: f64,
    pub phi: f64,
    pub pitch: f64,
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            layers: 16,
            dim: 8,
            step: 0.25,
            radius: 1.0,
            phi: PI / 8.0,
            pitch: 0.1,
            noise: 0.05,
        }
    }
}

impl SynthParams {
    fn validate(&self, kind: SynthKind) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.layers < 2 {
            return bad(format!("fixtures need L ≥ 2, got {}", self.layers));
        }
        let min_dim = match kind {
            SynthKind::Circle => 2,
            SynthKind::Helix => 3,
            _ => 1,
        };
        if self.dim < min_dim {
            return bad(format!("{} needs D ≥ {min_dim}", kind.name()));
        }
        match kind {
            SynthKind::Line | SynthKind::NoisyLine if !self.step.is_finite() => {
                bad(format!("step must be finite, got {}", self.step))
            }
            SynthKind::Circle | SynthKind::Helix if !(self.radius > 0.0 && self.radius.is_finite()) => {
                bad(format!("radius must be > 0, got {}", self.radius))
            }
            SynthKind::Circle | SynthKind::Helix if !(self.phi > 0.0 && self.phi < PI) => {
                bad(format!("phi must lie in (0, π), got {}", self.phi))
            }
            SynthKind::Helix if !self.pitch.is_finite() => bad(format!("pitch must be finite, got {}", self.pitch)),
            SynthKind::NoisyLine if !(self.noise >= 0.0 && self.noise.is_finite()) => {
                bad(format!("noise must be ≥ 0, got {}", self.noise))
            }
            _ => Ok(()),
        }
    }
}

/// Unit direction with dyadic entries: `±1/2` on four distinct axes when
/// `D ≥ 4`, a signed basis vector otherwise.
fn dyadic_direction(rng: &mut SplitMix64, dim: usize) -> Array1<f64> {
    let mut u = Array1::zeros(dim);
    let (count, value) = if dim >= 4 { (4, 0.5) } else { (1, 1.0) };
    let mut placed = 0;
    while placed < count {
        let axis = rng.next_index(dim);
        if u[axis] != 0.0 {
            continue;
        }
        u[axis] = if rng.next_u64() & 1 == 0 { value } else { -value };
        placed += 1;
    }
    u
}

pub fn synth_trajectory(kind: SynthKind, params: &SynthParams, seed: u64) -> Result<Trajectory> {
    params.validate(kind)?;
    let (l, d) = (params.layers, params.dim);
    let mut rng = SplitMix64::new(seed);
    let mut h = Array2::<f64>::zeros((l, d));
    match kind {
        SynthKind::Line | SynthKind::NoisyLine => {
            let u = dyadic_direction(&mut rng, d);
            for i in 0..l {
                let t = i as f64 * params.step;
                for j in 0..d {
                    h[[i, j]] = t * u[j];
                }
            }
            if kind == SynthKind::NoisyLine {
                for x in h.iter_mut() {
                    *x += params.noise * rng.next_normal();
                }
            }
        }
        SynthKind::Circle | SynthKind::Helix => {
            for i in 0..l {
                let angle = (i + 1) as f64 * params.phi;
                h[[i, 0]] = params.radius * angle.cos();
                h[[i, 1]] = params.radius * angle.sin();
                if kind == SynthKind::Helix {
                    h[[i, 2]] = params.pitch * angle;
                }
            }
        }
        SynthKind::Constant => {
            let v = rng.normals(d);
            for mut row in h.rows_mut() {
                row.assign(&ArrayView1::from(&v));
            }
        }
    }
    Ok(Trajectory::new(format!("synth-{}", kind.name()), h)?
        .with_provenance("fixture", kind.name())
        .with_provenance("seed", seed.to_string()))
}

/// Layered tanh network with a softmax probe head per layer.
///
/// `h₁ = tanh(W₁x + b₁)`, `h_{ℓ+1} = tanh(W_{ℓ+1}h_ℓ + b_{ℓ+1})`, probe
/// `p_ℓ = softmax(U_ℓ h_ℓ)`. Weights are drawn as `N(0,1)/sqrt(D)` in the
/// order `W₁, b₁, U₁, W₂, …`, each matrix row-major.
#[derive(Debug, Clone)]
pub struct ToyModel {
    seed: u64,
    d_in: usize,
    width: usize,
    classes: usize,
    transforms: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    probes: Vec<Array2<f64>>,
}

impl ToyModel {
    pub fn new(seed: u64, layers: usize, d_in: usize, width: usize, classes: usize) -> Result<Self> {
        if layers < 2 || d_in < 1 || width < 1 || classes < 2 {
            return Err(Error::Config(format!(
                "toy model needs L ≥ 2, D_in ≥ 1, D ≥ 1, C ≥ 2; got L={layers} D_in={d_in} D={width} C={classes}"
            )));
        }
        let mut rng = SplitMix64::new(seed);
        let scale = 1.0 / (width as f64).sqrt();
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_vec((rows, cols), rng.normals(rows * cols))
                .expect("shape matches length")
                .mapv(|x| x * scale)
        };
        let mut transforms = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        let mut probes = Vec::with_capacity(layers);
        for l in 0..layers {
            let cols = if l == 0 { d_in } else { width };
            transforms.push(draw(width, cols));
            biases.push(draw(1, width).row(0).to_owned());
            probes.push(draw(classes, width));
        }
        Ok(Self {
            seed,
            d_in,
            width,
            classes,
            transforms,
            biases,
            probes,
        })
    }

    pub fn with_zero_probes(mut self) -> Self {
        self.probes.iter_mut().for_each(|u| u.fill(0.0));
        self
    }

    pub fn with_zero_biases(mut self) -> Self {
        self.biases.iter_mut().for_each(|b| b.fill(0.0));
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> usize {
        self.transforms.len()
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn probe_weights(&self, layer: usize) -> &Array2<f64> {
        &self.probes[layer]
    }

    /// Hidden state at every layer.
    pub fn forward(&self, input: ArrayView1<f64>) -> Result<Vec<Array1<f64>>> {
        if input.len() != self.d_in {
            return Err(Error::precondition(format!(
                "input has {} features, model expects {}",
                input.len(),
                self.d_in
            )));
        }
        let mut out: Vec<Array1<f64>> = Vec::with_capacity(self.layers());
        for (l, (w, b)) in self.transforms.iter().zip(&self.biases).enumerate() {
            let prev = if l == 0 { input } else { out[l - 1].view() };
            out.push((w.dot(&prev) + b).mapv(f64::tanh));
        }
        Ok(out)
    }

    pub fn probe(&self, layer: usize, h: ArrayView1<f64>) -> Array1<f64> {
        softmax(&self.probes[layer].dot(&h))
    }

    pub fn log_prob(&self, layer: usize, h: ArrayView1<f64>, label: usize) -> f64 {
        log_prob_with(self.probes[layer].view(), h, label)
    }

    /// `∇_h log p_ℓ(y) = U_ℓᵀ (e_y − p_ℓ)`
    pub fn grad_hidden(&self, layer: usize, h: ArrayView1<f64>, label: usize) -> Array1<f64> {
        let r = self.residual(layer, h, label);
        self.probes[layer].t().dot(&r)
    }

    /// `‖∇_{U_ℓ} log p_ℓ(y)‖² = ‖e_y − p_ℓ‖² ‖h_ℓ‖²`
    pub fn theta_energy(&self, layer: usize, h: ArrayView1<f64>, label: usize) -> f64 {
        let r = self.residual(layer, h, label);
        r.dot(&r) * h.dot(&h)
    }

    fn residual(&self, layer: usize, h: ArrayView1<f64>, label: usize) -> Array1<f64> {
        let mut r = -self.probe(layer, h);
        r[label] += 1.0;
        r
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.classes {
            return Err(Error::precondition(format!(
                "label {label} out of range for {} classes",
                self.classes
            )));
        }
        Ok(())
    }
}

fn softmax(z: &Array1<f64>) -> Array1<f64> {
    let max = z.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let e = z.mapv(|x| (x - max).exp());
    let s = e.sum();
    e / s
}

fn log_prob_with(u: ArrayView2<f64>, h: ArrayView1<f64>, label: usize) -> f64 {
    let z = u.dot(&h);
    let max = z.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = max + z.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    z[label] - lse
}

/// Output of [`toy_run`].
#[derive(Debug, Clone)]
pub struct ToyRun {
    pub per_input: Vec<Trajectory>,
    pub pooled: Trajectory,
    pub grads: GradientBundle,
}

/// Forward passes for all inputs with closed-form probe gradients.
pub fn toy_run(model: &ToyModel, inputs: ArrayView2<f64>, labels: &[usize]) -> Result<ToyRun> {
    let n = inputs.nrows();
    if n == 0 || labels.len() != n {
        return Err(Error::precondition(format!(
            "need one label per input, got {} inputs and {} labels",
            n,
            labels.len()
        )));
    }
    for &y in labels {
        model.check_label(y)?;
    }
    let (l, d) = (model.layers(), model.width());
    type InputRun = (Array2<f64>, Array2<f64>, Vec<f64>);
    let runs: Vec<Result<InputRun>> = par::map_range(n, |i| {
        let hs = model.forward(inputs.row(i))?;
        let mut states = Array2::zeros((l, d));
        let mut grads = Array2::zeros((l, d));
        let mut energy = Vec::with_capacity(l);
        for (layer, h) in hs.iter().enumerate() {
            states.row_mut(layer).assign(h);
            grads
                .row_mut(layer)
                .assign(&model.grad_hidden(layer, h.view(), labels[i]));
            energy.push(model.theta_energy(layer, h.view(), labels[i]));
        }
        Ok((states, grads, energy))
    });
    let mut per_input = Vec::with_capacity(n);
    let mut pooled = Array2::<f64>::zeros((l, d));
    let mut hidden = Array3::<f64>::zeros((n, l, d));
    let mut theta = Array2::<f64>::zeros((n, l));
    for (i, r) in runs.into_iter().enumerate() {
        let (states, grads, energy) = r?;
        pooled += &states;
        hidden.index_axis_mut(ndarray::Axis(0), i).assign(&grads);
        theta.row_mut(i).assign(&Array1::from(energy));
        per_input
            .push(Trajectory::new(format!("toy-{}-input{i}", model.seed), states)?.with_provenance("fixture", "toy"));
    }
    pooled /= n as f64;
    let pooled = Trajectory::new(format!("toy-{}", model.seed), pooled)?
        .with_provenance("fixture", "toy")
        .with_provenance("seed", model.seed.to_string())
        .with_provenance("samples", n.to_string());
    let ids = (0..n).map(|i| format!("input{i}")).collect();
    let grads = GradientBundle::new(Some(hidden), Some(theta), ids)?;
    Ok(ToyRun {
        per_input,
        pooled,
        grads,
    })
}

/// Seeded standard-normal inputs with uniformly drawn labels.
pub fn toy_inputs(model: &ToyModel, n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = SplitMix64::new(seed);
    let x = Array2::from_shape_vec((n, model.d_in), rng.normals(n * model.d_in)).expect("shape matches length");
    let y = (0..n).map(|_| rng.next_index(model.classes)).collect();
    (x, y)
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-12)
}

/// Max relative error between the analytic `∇_h log p_ℓ` and central
/// differences of the probe with step `step`.
pub fn finite_diff_check(
    model: &ToyModel,
    input: ArrayView1<f64>,
    label: usize,
    layer: usize,
    step: f64,
) -> Result<f64> {
    check_fd_args(model, label, layer, step)?;
    let h = model.forward(input)?.swap_remove(layer);
    let analytic = model.grad_hidden(layer, h.view(), label);
    let mut worst = 0.0f64;
    let mut probe = h.clone();
    for j in 0..h.len() {
        probe[j] = h[j] + step;
        let up = model.log_prob(layer, probe.view(), label);
        probe[j] = h[j] - step;
        let down = model.log_prob(layer, probe.view(), label);
        probe[j] = h[j];
        worst = worst.max(relative_error(analytic[j], (up - down) / (2.0 * step)));
    }
    Ok(worst)
}

/// Relative error between the closed-form θ-energy and the squared norm of
/// the central-difference gradient with respect to the probe weights.
pub fn theta_energy_check(
    model: &ToyModel,
    input: ArrayView1<f64>,
    label: usize,
    layer: usize,
    step: f64,
) -> Result<f64> {
    check_fd_args(model, label, layer, step)?;
    let h = model.forward(input)?.swap_remove(layer);
    let analytic = model.theta_energy(layer, h.view(), label);
    let mut u = model.probes[layer].clone();
    let mut numeric = 0.0;
    for c in 0..u.nrows() {
        for j in 0..u.ncols() {
            let w = u[[c, j]];
            u[[c, j]] = w + step;
            let up = log_prob_with(u.view(), h.view(), label);
            u[[c, j]] = w - step;
            let down = log_prob_with(u.view(), h.view(), label);
            u[[c, j]] = w;
            let g = (up - down) / (2.0 * step);
            numeric += g * g;
        }
    }
    Ok(relative_error(analytic, numeric))
}

fn check_fd_args(model: &ToyModel, label: usize, layer: usize, step: f64) -> Result<()> {
    model.check_label(label)?;
    if layer >= model.layers() {
        return Err(Error::precondition(format!(
            "layer {layer} out of range for depth {}",
            model.layers()
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::precondition(format!("step must be > 0, got {step}")));
    }
    Ok(())
}
