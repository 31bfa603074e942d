//! Two-step transfer estimator: joint source training of a shared
//! representation with per-domain linear heads, then a target least squares
//! fit with the representation held fixed.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RtlError};
use crate::linalg::{dot, gemm, least_squares, Cholesky, Matrix, SolveOptions};
use crate::repnet::{self, ForwardPass, GradientBundle, NetworkConfig, NetworkParams};
use crate::rng::{Purpose, SeedStream};

/// Observations from one domain: response `y`, primary covariates `x` (n×d)
/// and confounders `z` (n×q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Matrix,
    pub z: Matrix,
    pub domain_id: String,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Matrix, z: Matrix, domain_id: impl Into<String>) -> Result<Self> {
        let ds = Dataset {
            y,
            x,
            z,
            domain_id: domain_id.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.rows() != self.y.len() {
            return Err(RtlError::mismatch("dataset X rows", self.y.len(), self.x.rows()));
        }
        if self.z.rows() != self.y.len() {
            return Err(RtlError::mismatch("dataset Z rows", self.y.len(), self.z.rows()));
        }
        if !self.x.is_finite() || !self.z.is_finite() || self.y.iter().any(|v| !v.is_finite()) {
            return Err(RtlError::NonFinite(alloc::format!("dataset {}", self.domain_id)));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn q(&self) -> usize {
        self.z.cols()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(idx),
            z: self.z.select_rows(idx),
            domain_id: self.domain_id.clone(),
        }
    }

    /// Seeded split into `(train, validation)` with `round(val_fraction·n)`
    /// validation rows.
    pub fn holdout_split(&self, val_fraction: f64, seed: SeedStream) -> (Dataset, Dataset) {
        let n = self.n();
        let idx = seed.permutation(n);
        let n_val = libm::round(val_fraction * n as f64) as usize;
        let n_val = n_val.clamp(usize::from(n > 1), n.saturating_sub(1));
        let (val, train) = idx.split_at(n_val);
        (self.select_rows(train), self.select_rows(val))
    }

    /// `y − Xβ`.
    pub fn partial_residual(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let xb = self.x.mul_vec(beta)?;
        Ok(self.y.iter().zip(xb).map(|(y, v)| y - v).collect())
    }
}

/// Training protocol for the source step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Validation rows as a fraction of each source when splitting file data.
    pub val_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Heavy-ball coefficient `μ` of the gradient step
    /// `v ← μv + ∇`, `θ ← θ − lr·v`; zero gives plain gradient descent.
    #[serde(default)]
    pub momentum: f64,
    pub ridge: SolveOptions,
    /// Re-expresses the network output in a basis with identity Gram matrix
    /// on the training rows after every head refresh. The fitted functions
    /// `γ_kᵀR` are unchanged; only the gradient geometry differs.
    #[serde(default = "default_whiten")]
    pub whiten: bool,
    pub seed: u64,
}

fn default_whiten() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            lr: 1e-3,
            val_fraction: 0.30,
            patience: 50,
            momentum: 0.0,
            ridge: SolveOptions::default(),
            whiten: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(RtlError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(RtlError::InvalidConfig(alloc::format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(RtlError::InvalidConfig(alloc::format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(RtlError::InvalidConfig(alloc::format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        self.ridge.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Result of the joint source fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFit {
    /// Snapshot with the smallest validation loss.
    pub rep: NetworkParams,
    pub betas: Vec<Vec<f64>>,
    pub gammas: Vec<Vec<f64>>,
    pub train_history: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
}

impl SourceFit {
    pub fn best_val_loss(&self) -> f64 {
        self.train_history
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .map_or(f64::INFINITY, |r| r.val_loss)
    }
}

/// Joint least squares of `y` on `[X, rep_values]`, split into `(β, γ)`.
pub fn solve_domain_linear(data: &Dataset, rep_values: &Matrix, opts: &SolveOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    if rep_values.rows() != data.n() {
        return Err(RtlError::mismatch("representation rows", data.n(), rep_values.rows()));
    }
    let design = data.x.hcat(rep_values)?;
    let coef = least_squares(&design, &data.y, opts).map_err(|e| e.in_domain(&data.domain_id))?;
    let (beta, gamma) = coef.split_at(data.d());
    Ok((beta.to_vec(), gamma.to_vec()))
}

/// Mean squared residual of one domain under `(β, γ)` and precomputed
/// representation values.
fn domain_mse(data: &Dataset, rep_values: &Matrix, beta: &[f64], gamma: &[f64]) -> f64 {
    let n = data.n();
    let mut sse = 0.0;
    for i in 0..n {
        let r = data.y[i] - dot(data.x.row(i), beta) - dot(rep_values.row(i), gamma);
        sse += r * r;
    }
    sse / n as f64
}

fn check_sources(train: &[Dataset], val: &[Dataset], net_cfg: &NetworkConfig) -> Result<()> {
    if train.is_empty() {
        return Err(RtlError::mismatch("source domains", 1, 0));
    }
    if val.len() != train.len() {
        return Err(RtlError::mismatch("validation domains", train.len(), val.len()));
    }
    let d = train[0].d();
    let q = net_cfg.input_dim;
    // The per-domain least squares needs at least as many rows as columns.
    let required = d + net_cfg.output_dim;
    for ds in train.iter().chain(val) {
        ds.validate()?;
        if ds.d() != d {
            return Err(RtlError::mismatch("source d", d, ds.d()));
        }
        if ds.q() != q {
            return Err(RtlError::mismatch("source q", q, ds.q()));
        }
    }
    for ds in train {
        if ds.n() < required {
            return Err(RtlError::InsufficientData {
                domain: ds.domain_id.clone(),
                rows: ds.n(),
                required,
            });
        }
    }
    for ds in val {
        if ds.n() == 0 {
            return Err(RtlError::InsufficientData {
                domain: ds.domain_id.clone(),
                rows: 0,
                required: 1,
            });
        }
    }
    Ok(())
}

/// Joint source fit with a seeded `val_fraction` holdout carved out of each
/// source.
pub fn fit_sources(sources: &[Dataset], net_cfg: &NetworkConfig, train_cfg: &TrainConfig) -> Result<SourceFit> {
    train_cfg.validate()?;
    let split_seed = SeedStream::new(train_cfg.seed).purpose(Purpose::Split);
    let (train, val): (Vec<_>, Vec<_>) = sources
        .iter()
        .enumerate()
        .map(|(k, s)| s.holdout_split(train_cfg.val_fraction, split_seed.child(k as u64)))
        .unzip();
    fit_sources_with_validation(&train, &val, net_cfg, train_cfg)
}

/// Joint source fit with caller-supplied validation sets (one per source).
///
/// Each epoch takes one full-batch gradient step on the network with the
/// current linear heads held fixed, then refreshes every `(β_k, γ_k)` by
/// least squares on the training rows. The snapshot with the smallest
/// validation loss is returned.
pub fn fit_sources_with_validation(
    train: &[Dataset],
    val: &[Dataset],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<SourceFit> {
    train_cfg.validate()?;
    net_cfg.validate()?;
    check_sources(train, val, net_cfg)?;
    let opts = &train_cfg.ridge;

    let mut params = repnet::init_params(net_cfg)?;
    let mut passes = train_passes(train, &params)?;
    let (mut coefs, _) = refresh_with_loss(train, &passes, opts)?;

    let mut history = Vec::with_capacity(train_cfg.epochs);
    let mut best: Option<(f64, usize, NetworkParams, Vec<(Vec<f64>, Vec<f64>)>)> = None;
    let mut stopped_epoch = 0;
    let mut velocity: Option<GradientBundle> = None;

    for epoch in 1..=train_cfg.epochs {
        let mut grads = GradientBundle::zeros_like(&params);
        for ((ds, pass), (beta, gamma)) in train.iter().zip(&passes).zip(&coefs) {
            let target = ds.partial_residual(beta)?;
            repnet::accumulate_gradients(&params, pass, &target, gamma, train.len(), &mut grads)?;
        }
        let step = match velocity.take() {
            Some(mut v) if train_cfg.momentum > 0.0 => {
                v.blend(train_cfg.momentum, &grads);
                v
            }
            _ => grads,
        };
        let mut next = params.clone();
        next.apply_gradient(&step, train_cfg.lr, net_cfg.param_bound)?;
        velocity = Some(step);
        if !next.max_abs().is_finite() {
            // Diverged; keep the best snapshot so far.
            break;
        }

        let mut next_passes = train_passes(train, &next)?;
        let (mut next_coefs, train_loss) = match refresh_with_loss(train, &next_passes, opts) {
            Ok(v) => v,
            Err(e) if e.is_numeric() && best.is_some() => break,
            Err(e) => return Err(e),
        };
        if train_cfg.whiten {
            whiten_output(&mut next, &mut next_passes, &mut next_coefs)?;
        }
        params = next;
        passes = next_passes;
        coefs = next_coefs;
        let val_loss = validation_loss(val, &params, &coefs)?;
        stopped_epoch = epoch;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });

        let improved = best.as_ref().map_or(true, |(b, ..)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, params.clone(), coefs.clone()));
        } else if let Some((_, best_epoch, ..)) = &best {
            if epoch - best_epoch >= train_cfg.patience {
                break;
            }
        }
    }

    let (_, best_epoch, rep, best_coefs) = match best {
        Some(b) => b,
        None => {
            return Err(RtlError::NonFinite("source training diverged in the first epoch".into()));
        }
    };
    let (betas, gammas) = best_coefs.into_iter().unzip();
    Ok(SourceFit {
        rep,
        betas,
        gammas,
        train_history: history,
        stopped_epoch,
        best_epoch,
    })
}

/// Applies `R ← L⁻¹R`, `γ ← Lᵀγ` where `L Lᵀ` is the pooled output Gram
/// matrix. Leaves everything untouched when that matrix is singular.
fn whiten_output(
    params: &mut NetworkParams,
    passes: &mut [ForwardPass],
    coefs: &mut [(Vec<f64>, Vec<f64>)],
) -> Result<()> {
    let p = params.output_dim();
    let mut gram = Matrix::zeros(p, p);
    let mut rows = 0;
    for pass in passes.iter() {
        gemm(1.0, pass.output(), true, pass.output(), false, 1.0, &mut gram)?;
        rows += pass.rows();
    }
    let gram = gram.scale(1.0 / rows as f64);
    let chol = match Cholesky::new(&gram, 0.0, 1e-10) {
        Ok(c) => c,
        Err(_) => return Ok(()),
    };
    let m = chol.lower_inverse();
    *params = params.with_output_transform(&m)?;
    for pass in passes.iter_mut() {
        pass.transform_output(&m)?;
    }
    for (_, gamma) in coefs.iter_mut() {
        *gamma = chol.lower().t_mul_vec(gamma)?;
    }
    Ok(())
}

fn train_passes(train: &[Dataset], params: &NetworkParams) -> Result<Vec<ForwardPass>> {
    train.iter().map(|ds| repnet::forward_pass(params, &ds.z)).collect()
}

fn refresh_with_loss(
    train: &[Dataset],
    passes: &[ForwardPass],
    opts: &SolveOptions,
) -> Result<(Vec<(Vec<f64>, Vec<f64>)>, f64)> {
    let mut coefs = Vec::with_capacity(train.len());
    let mut total = 0.0;
    for (ds, pass) in train.iter().zip(passes) {
        let rep = pass.output();
        if !rep.is_finite() {
            return Err(RtlError::NonFinite("representation output".into()));
        }
        let (beta, gamma) = solve_domain_linear(ds, rep, opts)?;
        total += domain_mse(ds, rep, &beta, &gamma);
        coefs.push((beta, gamma));
    }
    Ok((coefs, total / train.len() as f64))
}

fn validation_loss(val: &[Dataset], params: &NetworkParams, coefs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut total = 0.0;
    for (ds, (beta, gamma)) in val.iter().zip(coefs) {
        let rep = repnet::forward(params, &ds.z)?;
        total += domain_mse(ds, &rep, beta, gamma);
    }
    Ok(total / val.len() as f64)
}

/// Target-domain fit with the representation held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFit {
    pub beta0: Vec<f64>,
    pub gamma0: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `R̂(Z₀)`, n₀×p.
    pub rep_values: Matrix,
}

impl TargetFit {
    /// Fits `(β₀, γ₀)` on precomputed representation values.
    pub fn from_rep_values(target: &Dataset, rep_values: Matrix, opts: &SolveOptions) -> Result<Self> {
        target.validate()?;
        let required = target.d() + rep_values.cols();
        if target.n() < required {
            return Err(RtlError::InsufficientData {
                domain: target.domain_id.clone(),
                rows: target.n(),
                required,
            });
        }
        let (beta0, gamma0) = solve_domain_linear(target, &rep_values, opts)?;
        let residuals = (0..target.n())
            .map(|i| target.y[i] - dot(target.x.row(i), &beta0) - dot(rep_values.row(i), &gamma0))
            .collect();
        Ok(TargetFit {
            beta0,
            gamma0,
            residuals,
            rep_values,
        })
    }

    pub fn n0(&self) -> usize {
        self.residuals.len()
    }

    /// `xᵀβ̂₀ + γ̂₀ᵀ r` for given representation values.
    pub fn predict_from_rep(&self, x: &Matrix, rep_values: &Matrix) -> Result<Vec<f64>> {
        let mut out = x.mul_vec(&self.beta0)?;
        let g = rep_values.mul_vec(&self.gamma0)?;
        out.iter_mut().zip(g).for_each(|(o, v)| *o += v);
        Ok(out)
    }

    pub fn predict(&self, rep: &NetworkParams, x: &Matrix, z: &Matrix) -> Result<Vec<f64>> {
        let r = repnet::forward(rep, z)?;
        self.predict_from_rep(x, &r)
    }
}

/// Least squares of `Y₀` on `[X₀, R̂(Z₀)]`; the network is not retrained.
pub fn fit_target(target: &Dataset, rep: &NetworkParams, opts: &SolveOptions) -> Result<TargetFit> {
    if target.q() != rep.input_dim() {
        return Err(RtlError::mismatch("target q", rep.input_dim(), target.q()));
    }
    let rep_values = repnet::forward(rep, &target.z)?;
    TargetFit::from_rep_values(target, rep_values, opts)
}

/// Linear map taking a learned representation onto a reference one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `Λ` (r×p) minimizing `Σ_i ‖Λ R̂(z_i) − R*(z_i)‖²`.
    pub lambda: Matrix,
    /// `R̂ Λᵀ`, m×r.
    pub aligned: Matrix,
    /// `‖aligned − truth‖_F / ‖truth‖_F`.
    pub rel_error: f64,
    /// Per-column relative L2 errors.
    pub component_rel_errors: Vec<f64>,
}

/// Row-wise least squares alignment of `learned` (m×p) onto `truth` (m×r).
pub fn align_representation(learned: &Matrix, truth: &Matrix, opts: &SolveOptions) -> Result<Alignment> {
    if learned.rows() != truth.rows() {
        return Err(RtlError::mismatch("alignment grid rows", learned.rows(), truth.rows()));
    }
    if learned.rows() < learned.cols() {
        return Err(RtlError::RankDeficient(alloc::format!(
            "grid of {} points cannot identify a {}-dimensional map",
            learned.rows(),
            learned.cols()
        )));
    }
    let gram = learned.gram();
    let chol = Cholesky::new(&gram, opts.ridge, opts.tolerance)
        .map_err(|_| RtlError::RankDeficient("learned representation Gram matrix is singular".into()))?;
    let cross = learned.t_matmul(truth)?;
    let lambda_t = chol.solve_matrix(&cross);
    let aligned = learned.matmul(&lambda_t)?;
    let diff = aligned.sub(truth)?;
    let tn = truth.frobenius_norm();
    let rel_error = if tn > 0.0 { diff.frobenius_norm() / tn } else { diff.frobenius_norm() };
    let component_rel_errors = (0..truth.cols())
        .map(|j| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..truth.rows() {
                num += diff[(i, j)] * diff[(i, j)];
                den += truth[(i, j)] * truth[(i, j)];
            }
            if den > 0.0 {
                libm::sqrt(num / den)
            } else {
                libm::sqrt(num)
            }
        })
        .collect();
    Ok(Alignment {
        lambda: lambda_t.transpose(),
        aligned,
        rel_error,
        component_rel_errors,
    })
}
