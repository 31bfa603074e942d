//! Feedforward ReLU representation network `R: ℝ^q → ℝ^p` with exact
//! backpropagation of the multi-domain squared loss and plain gradient steps.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RtlError};
use crate::linalg::{axpy, dot, gemm, Matrix};
use crate::rng::SeedStream;

/// Architecture and initialization seed of the representation network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Confounder dimension `q`.
    pub input_dim: usize,
    /// Representation dimension `p`.
    pub output_dim: usize,
    /// Number of hidden layers `D`.
    pub depth: usize,
    /// Hidden width `W`.
    pub width: usize,
    /// Entrywise bound on every parameter; `None` leaves parameters free.
    #[serde(default)]
    pub param_bound: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, output_dim: usize, depth: usize, width: usize, seed: u64) -> Self {
        NetworkConfig {
            input_dim,
            output_dim,
            depth,
            width,
            param_bound: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.width == 0 {
            return Err(RtlError::InvalidConfig(
                "network input_dim, output_dim and width must be at least 1".into(),
            ));
        }
        if let Some(b) = self.param_bound {
            if !(b > 0.0) {
                return Err(RtlError::InvalidConfig(alloc::format!(
                    "param_bound must be positive, got {b}"
                )));
            }
        }
        Ok(())
    }

    /// `(out, in)` shape of every weight matrix, input layer first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.depth + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.depth {
            shapes.push((self.width, fan_in));
            fan_in = self.width;
        }
        shapes.push((self.output_dim, fan_in));
        shapes
    }

    /// Total number of weights and biases.
    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * (i + 1)).sum()
    }
}

/// Weights `A_0..A_D` and biases `b_0..b_D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsDocument", try_from = "ParamsDocument")]
pub struct NetworkParams {
    config: NetworkConfig,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// JSON layout: weights as nested row-major arrays.
#[derive(Serialize, Deserialize)]
struct ParamsDocument {
    config: NetworkConfig,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

impl From<NetworkParams> for ParamsDocument {
    fn from(p: NetworkParams) -> Self {
        ParamsDocument {
            config: p.config,
            weights: p.weights.iter().map(Matrix::to_rows).collect(),
            biases: p.biases,
        }
    }
}

impl TryFrom<ParamsDocument> for NetworkParams {
    type Error = RtlError;

    fn try_from(doc: ParamsDocument) -> Result<Self> {
        let mut weights = Vec::with_capacity(doc.weights.len());
        for w in &doc.weights {
            let cols = w.first().map_or(0, Vec::len);
            if w.iter().any(|r| r.len() != cols) {
                return Err(RtlError::InvalidConfig("ragged weight matrix".into()));
            }
            weights.push(Matrix::from_rows(w));
        }
        NetworkParams::from_parts(doc.config, weights, doc.biases)
    }
}

impl NetworkParams {
    /// Assembles parameters, checking every shape against `config`.
    pub fn from_parts(config: NetworkConfig, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if weights.len() != shapes.len() || biases.len() != shapes.len() {
            return Err(RtlError::mismatch("layer count", shapes.len(), weights.len()));
        }
        for ((w, b), &(o, i)) in weights.iter().zip(&biases).zip(&shapes) {
            if w.shape() != (o, i) {
                return Err(RtlError::mismatch("weight shape", o * i, w.rows() * w.cols()));
            }
            if b.len() != o {
                return Err(RtlError::mismatch("bias length", o, b.len()));
            }
            if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
                return Err(RtlError::NonFinite("network parameters".into()));
            }
        }
        Ok(NetworkParams {
            config,
            weights,
            biases,
        })
    }

    /// Uniform weights in `±gain/√fan_in` (gain √6 before a ReLU, √3 on the
    /// linear output layer), zero biases.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeedStream::new(config.seed).rng();
        let shapes = config.layer_shapes();
        let last = shapes.len() - 1;
        let mut weights = Vec::with_capacity(shapes.len());
        let mut biases = Vec::with_capacity(shapes.len());
        for (l, &(o, i)) in shapes.iter().enumerate() {
            let gain: f64 = if l == last { 3.0 } else { 6.0 };
            let bound = libm::sqrt(gain / i as f64);
            let w = Matrix::from_fn(o, i, |_, _| rng.random_range(-bound..bound));
            weights.push(w);
            biases.push(vec![0.0; o]);
        }
        Ok(NetworkParams {
            config: *config,
            weights,
            biases,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    /// Flat view of all parameters, layer by layer (weights then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.config.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.config.parameter_count() {
            return Err(RtlError::mismatch(
                "flat parameter length",
                self.config.parameter_count(),
                flat.len(),
            ));
        }
        let mut out = self.clone();
        let mut k = 0;
        for (w, b) in out.weights.iter_mut().zip(out.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&flat[k..k + n]);
            k += n;
            let m = b.len();
            b.copy_from_slice(&flat[k..k + m]);
            k += m;
        }
        Ok(out)
    }

    /// Composes a fixed linear map `M` (p'×p) onto the output layer, giving a
    /// network computing `M · R(z)`.
    pub fn with_output_transform(&self, m: &Matrix) -> Result<Self> {
        let p = self.config.output_dim;
        if m.cols() != p {
            return Err(RtlError::mismatch("output transform cols", p, m.cols()));
        }
        let mut out = self.clone();
        let last = out.weights.len() - 1;
        out.weights[last] = m.matmul(&self.weights[last])?;
        out.biases[last] = m.mul_vec(&self.biases[last])?;
        out.config.output_dim = m.rows();
        Ok(out)
    }

    /// Largest absolute parameter.
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .map(Matrix::max_abs)
            .chain(self.biases.iter().flatten().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }
}

/// Deterministic initialization from `config.seed`.
pub fn init_params(config: &NetworkConfig) -> Result<NetworkParams> {
    NetworkParams::init(config)
}

fn affine(input: &Matrix, w: &Matrix, b: &[f64], relu: bool) -> Matrix {
    let n = input.rows();
    let mut out = Matrix::zeros(n, w.rows());
    for i in 0..n {
        out.row_mut(i).copy_from_slice(b);
    }
    gemm(1.0, input, false, w, true, 1.0, &mut out).expect("layer shapes checked");
    if relu {
        out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    }
    out
}

fn check_input(params: &NetworkParams, z: &Matrix) -> Result<()> {
    if z.cols() != params.config.input_dim {
        return Err(RtlError::mismatch("network input dim", params.config.input_dim, z.cols()));
    }
    if !z.is_finite() {
        return Err(RtlError::NonFinite("network input".into()));
    }
    Ok(())
}

/// Every layer output of one forward evaluation, kept for backpropagation.
/// `acts[0]` is the input, hidden entries are post-ReLU and the last entry is
/// the linear output `R(z)`.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    acts: Vec<Matrix>,
}

impl ForwardPass {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("at least input and output")
    }

    pub fn rows(&self) -> usize {
        self.acts[0].rows()
    }

    /// Replaces the cached output `R` by `R Mᵀ`, matching a network that was
    /// reparameterized with [`NetworkParams::with_output_transform`].
    pub fn transform_output(&mut self, m: &Matrix) -> Result<()> {
        let out = self.acts.last_mut().expect("at least input and output");
        *out = out.matmul_t(m)?;
        Ok(())
    }
}

/// Forward evaluation retaining intermediate activations.
pub fn forward_pass(params: &NetworkParams, z: &Matrix) -> Result<ForwardPass> {
    check_input(params, z)?;
    let last = params.weights.len() - 1;
    let mut acts = Vec::with_capacity(params.weights.len() + 1);
    acts.push(z.clone());
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let next = affine(acts.last().unwrap(), w, b, l != last);
        acts.push(next);
    }
    Ok(ForwardPass { acts })
}

/// Evaluates `R(z_i)` for every row of `z`.
pub fn forward(params: &NetworkParams, z: &Matrix) -> Result<Matrix> {
    check_input(params, z)?;
    let last = params.weights.len() - 1;
    let mut h = affine(z, &params.weights[0], &params.biases[0], last != 0);
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate().skip(1) {
        h = affine(&h, w, b, l != last);
    }
    Ok(h)
}

/// Gradient with respect to every parameter, shaped like [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub loss_value: f64,
}

impl GradientBundle {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        GradientBundle {
            weights: params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            loss_value: 0.0,
        }
    }

    /// `self ← μ·self + other`.
    pub fn blend(&mut self, mu: f64, other: &GradientBundle) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            for (a, b) in w.as_mut_slice().iter_mut().zip(o.as_slice()) {
                *a = mu * *a + b;
            }
        }
        for (w, o) in self.biases.iter_mut().zip(&other.biases) {
            for (a, b) in w.iter_mut().zip(o) {
                *a = mu * *a + b;
            }
        }
        self.loss_value = other.loss_value;
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// One domain's contribution to the multi-domain loss: confounders, the
/// residual target `Y_k − X_k β_k`, and the current `γ_k`.
#[derive(Debug, Clone, Copy)]
pub struct DomainBatch<'a> {
    pub z: &'a Matrix,
    pub target: &'a [f64],
    pub gamma: &'a [f64],
}

fn check_batch(params: &NetworkParams, batch: &DomainBatch<'_>) -> Result<()> {
    check_input(params, batch.z)?;
    if batch.target.len() != batch.z.rows() {
        return Err(RtlError::mismatch("batch target rows", batch.z.rows(), batch.target.len()));
    }
    if batch.gamma.len() != params.config.output_dim {
        return Err(RtlError::mismatch("batch gamma", params.config.output_dim, batch.gamma.len()));
    }
    if batch.z.rows() == 0 {
        return Err(RtlError::mismatch("batch rows", 1, 0));
    }
    Ok(())
}

/// `(1/K) Σ_k (1/n_k) Σ_i (t_ki − γ_kᵀ R(z_ki))²` without gradients.
pub fn loss(params: &NetworkParams, batches: &[DomainBatch<'_>]) -> Result<f64> {
    if batches.is_empty() {
        return Err(RtlError::mismatch("domain batches", 1, 0));
    }
    let mut total = 0.0;
    for b in batches {
        check_batch(params, b)?;
        let out = forward(params, b.z)?;
        let sse: f64 = (0..out.rows())
            .map(|i| {
                let r = b.target[i] - dot(out.row(i), b.gamma);
                r * r
            })
            .sum();
        total += sse / b.z.rows() as f64;
    }
    Ok(total / batches.len() as f64)
}

/// Adds one domain's term of the multi-domain loss and its gradient to
/// `grads`, reusing a cached forward pass. `n_domains` is `K`.
pub fn accumulate_gradients(
    params: &NetworkParams,
    pass: &ForwardPass,
    target: &[f64],
    gamma: &[f64],
    n_domains: usize,
    grads: &mut GradientBundle,
) -> Result<()> {
    let n_layers = params.weights.len();
    if pass.acts.len() != n_layers + 1 || pass.acts[0].cols() != params.config.input_dim {
        return Err(RtlError::mismatch("forward pass layers", n_layers + 1, pass.acts.len()));
    }
    check_grad_shapes(params, grads)?;
    let n = pass.rows();
    if n == 0 || target.len() != n {
        return Err(RtlError::mismatch("batch target rows", n, target.len()));
    }
    if gamma.len() != params.config.output_dim {
        return Err(RtlError::mismatch("batch gamma", params.config.output_dim, gamma.len()));
    }
    let denom = n_domains as f64 * n as f64;
    let out = pass.output();
    let scale = -2.0 / denom;
    let mut sse = 0.0;
    // δ at the output: ∂L/∂R(z_i) = −2 r_i γ / (K n_k).
    let mut delta = Matrix::zeros(n, params.config.output_dim);
    for i in 0..n {
        let r = target[i] - dot(out.row(i), gamma);
        sse += r * r;
        for (dj, g) in delta.row_mut(i).iter_mut().zip(gamma) {
            *dj = scale * r * g;
        }
    }
    grads.loss_value += sse / denom;

    for l in (0..n_layers).rev() {
        let input = &pass.acts[l];
        gemm(1.0, &delta, true, input, false, 1.0, &mut grads.weights[l])?;
        let gb = &mut grads.biases[l];
        for i in 0..n {
            for (g, &dv) in gb.iter_mut().zip(delta.row(i)) {
                *g += dv;
            }
        }
        if l == 0 {
            break;
        }
        // Propagate through A_l, then the ReLU gate of the layer below.
        let w = &params.weights[l];
        let mut prev = Matrix::zeros(n, w.cols());
        gemm(1.0, &delta, false, w, false, 0.0, &mut prev)?;
        for (p, &h) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
            if h <= 0.0 {
                *p = 0.0;
            }
        }
        delta = prev;
    }
    Ok(())
}

/// Loss value and exact backpropagated gradient of the multi-domain loss.
pub fn loss_and_gradients(params: &NetworkParams, batches: &[DomainBatch<'_>]) -> Result<GradientBundle> {
    if batches.is_empty() {
        return Err(RtlError::mismatch("domain batches", 1, 0));
    }
    let mut grads = GradientBundle::zeros_like(params);
    for b in batches {
        check_batch(params, b)?;
        let pass = forward_pass(params, b.z)?;
        accumulate_gradients(params, &pass, b.target, b.gamma, batches.len(), &mut grads)?;
    }
    Ok(grads)
}

fn check_grad_shapes(params: &NetworkParams, grads: &GradientBundle) -> Result<()> {
    if grads.weights.len() != params.weights.len() || grads.biases.len() != params.biases.len() {
        return Err(RtlError::mismatch("gradient layers", params.weights.len(), grads.weights.len()));
    }
    for ((w, gw), (b, gb)) in params
        .weights
        .iter()
        .zip(&grads.weights)
        .zip(params.biases.iter().zip(&grads.biases))
    {
        if w.shape() != gw.shape() || b.len() != gb.len() {
            return Err(RtlError::mismatch(
                "gradient shape",
                w.as_slice().len() + b.len(),
                gw.as_slice().len() + gb.len(),
            ));
        }
    }
    Ok(())
}

impl NetworkParams {
    /// In-place `θ ← θ − lr·∇`, then clamp to `[−bound, bound]` if given.
    pub fn apply_gradient(&mut self, grads: &GradientBundle, lr: f64, clamp: Option<f64>) -> Result<()> {
        check_grad_shapes(self, grads)?;
        for (w, gw) in self.weights.iter_mut().zip(&grads.weights) {
            axpy(-lr, gw.as_slice(), w.as_mut_slice());
        }
        for (b, gb) in self.biases.iter_mut().zip(&grads.biases) {
            axpy(-lr, gb, b);
        }
        if let Some(bound) = clamp {
            let clip = |v: &mut f64| *v = v.clamp(-bound, bound);
            self.weights.iter_mut().for_each(|w| w.as_mut_slice().iter_mut().for_each(clip));
            self.biases.iter_mut().for_each(|b| b.iter_mut().for_each(clip));
        }
        Ok(())
    }
}

/// One gradient step, returning the updated parameters.
pub fn sgd_step(params: &NetworkParams, grads: &GradientBundle, lr: f64, clamp: Option<f64>) -> Result<NetworkParams> {
    if !(lr >= 0.0) {
        return Err(RtlError::InvalidConfig(alloc::format!("learning rate must be nonnegative, got {lr}")));
    }
    let mut out = params.clone();
    out.apply_gradient(grads, lr, clamp)?;
    Ok(out)
}
