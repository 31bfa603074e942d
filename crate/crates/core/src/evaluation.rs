//! Replicated simulation studies: scenario definition, per-replication data
//! generation with derived seeds, method runs, metrics and aggregation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_meta, fit_oracle, fit_pool, fit_stl, BaselineFit, FitDetails, Method, RegressionSurface, DEFAULT_KNOT_GRID};
use crate::error::{Result, RtlError};
use crate::estimator::{align_representation, fit_sources_with_validation, fit_target, Alignment, Dataset, TrainConfig};
use crate::inference::{infer_target, linear_combination_inference};
use crate::linalg::{dot, norm2, Matrix};
use crate::repnet::{self, NetworkConfig};
use crate::rng::{Purpose, SeedStream};
use crate::simgen::{
    generate_domain, make_coefficients, make_design, true_regression, true_representation, CoefficientRegime, CoefficientSet,
    DesignDims, DesignFamily, SimulationDesign,
};

/// Default test-set size per replication.
pub const DEFAULT_N_TEST: usize = 2000;

/// A replicated simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub design: SimulationDesign,
    pub regime: CoefficientRegime,
    /// Number of source domains `K`.
    #[serde(rename = "K")]
    pub k: usize,
    /// Rows per source domain.
    pub n_k: usize,
    /// Target rows.
    pub n0: usize,
    /// Working representation dimension `p`; `net.output_dim` must match.
    pub r_working: usize,
    pub net: NetworkConfig,
    pub train: TrainConfig,
    pub replications: usize,
    pub methods: Vec<Method>,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_knot_grid")]
    pub knot_grid: Vec<usize>,
    pub seed: u64,
}

fn default_n_test() -> usize {
    DEFAULT_N_TEST
}

fn default_knot_grid() -> Vec<usize> {
    DEFAULT_KNOT_GRID.to_vec()
}

/// Network defaults used by the desk-scale studies.
pub fn desk_network(q: usize, p: usize) -> NetworkConfig {
    NetworkConfig::new(q, p, 1, 32, 0)
}

/// Training defaults used by the desk-scale studies.
pub fn desk_training() -> TrainConfig {
    TrainConfig {
        epochs: 800,
        lr: 0.3,
        momentum: 0.9,
        patience: 100,
        ..TrainConfig::default()
    }
}

impl Scenario {
    /// Scenario with desk-scale network and training defaults, all
    /// computable methods, and the default test size and knot grid.
    #[allow(clippy::too_many_arguments)]
    pub fn desk(
        design: SimulationDesign,
        regime: CoefficientRegime,
        k: usize,
        n_k: usize,
        n0: usize,
        r_working: usize,
        replications: usize,
        seed: u64,
    ) -> Self {
        let net = desk_network(design.q, r_working);
        Scenario {
            design,
            regime,
            k,
            n_k,
            n0,
            r_working,
            net,
            train: desk_training(),
            replications,
            methods: vec![Method::Rtl, Method::Stl, Method::Pool, Method::Meta, Method::Oracle],
            n_test: DEFAULT_N_TEST,
            knot_grid: default_knot_grid(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        let bad = |msg: String| Err(RtlError::InvalidConfig(msg));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must be nonempty".into());
        }
        if self.k == 0 || self.n_k == 0 || self.n0 == 0 || self.n_test == 0 {
            return bad("K, n_k, n0 and n_test must be positive".into());
        }
        if self.net.input_dim != self.design.q {
            return bad(format!("net.input_dim {} must equal design q {}", self.net.input_dim, self.design.q));
        }
        if self.net.output_dim != self.r_working {
            return bad(format!(
                "net.output_dim {} must equal r_working {}",
                self.net.output_dim, self.r_working
            ));
        }
        if self.knot_grid.is_empty() {
            return bad("knot_grid must be nonempty".into());
        }
        Ok(())
    }

    fn replication_stream(&self, r: usize) -> SeedStream {
        SeedStream::new(self.seed).purpose(Purpose::Replication).child(r as u64)
    }
}

/// All data for one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationData {
    pub coefficients: CoefficientSet,
    pub sources: Vec<Dataset>,
    pub source_validation: Vec<Dataset>,
    pub target: Dataset,
    pub target_validation: Dataset,
    pub test: Dataset,
    /// Noiseless target mean on the test rows.
    pub test_truth: Vec<f64>,
}

fn validation_size(fraction: f64, n: usize) -> usize {
    (libm::round(fraction * n as f64) as usize).max(1)
}

/// Draws replication `r`. With `fixed_target`, the target's `β₀` and `γ₀`
/// are set to that constant while the sources follow the scenario regime.
pub fn replication_data(scenario: &Scenario, r: usize, fixed_target: Option<f64>) -> Result<ReplicationData> {
    let design = &scenario.design;
    let stream = scenario.replication_stream(r);
    let mut coefficients = make_coefficients(
        scenario.k,
        design.d,
        design.r_true,
        scenario.regime,
        stream.purpose(Purpose::Coefficients).seed(),
    )?;
    if let Some(c) = fixed_target {
        coefficients.betas[0] = vec![c; design.d];
        coefficients.gammas[0] = vec![c; design.r_true];
    }
    let frac = scenario.train.val_fraction;
    let domain = |k: usize, n: usize, purpose: Purpose, id: String| {
        generate_domain(
            design,
            &coefficients.betas[k],
            &coefficients.gammas[k],
            n,
            stream.purpose(purpose).child(k as u64).seed(),
            id,
        )
    };
    let mut sources = Vec::with_capacity(scenario.k);
    let mut source_validation = Vec::with_capacity(scenario.k);
    for k in 1..=scenario.k {
        sources.push(domain(k, scenario.n_k, Purpose::Train, format!("source{k}"))?);
        source_validation.push(domain(
            k,
            validation_size(frac, scenario.n_k),
            Purpose::Validation,
            format!("source{k}"),
        )?);
    }
    let target = domain(0, scenario.n0, Purpose::Train, "target".to_string())?;
    let target_validation = domain(0, validation_size(frac, scenario.n0), Purpose::Validation, "target".to_string())?;
    let test = domain(0, scenario.n_test, Purpose::Test, "test".to_string())?;
    let test_truth = true_regression(design, &coefficients.betas[0], &coefficients.gammas[0], &test.x, &test.z)?;
    Ok(ReplicationData {
        coefficients,
        sources,
        source_validation,
        target,
        target_validation,
        test,
        test_truth,
    })
}

/// `(1/n) Σ (μ̂ᵢ − μᵢ)²`.
pub fn prediction_mse(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(RtlError::mismatch("prediction length", truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(RtlError::mismatch("test rows", 1, 0));
    }
    let sse: f64 = predicted.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sse / truth.len() as f64)
}

/// `‖β̂ − β‖₂`.
pub fn estimation_error(beta_hat: &[f64], beta_true: &[f64]) -> Result<f64> {
    if beta_hat.len() != beta_true.len() {
        return Err(RtlError::mismatch("beta length", beta_true.len(), beta_hat.len()));
    }
    let diff: Vec<f64> = beta_hat.iter().zip(beta_true).map(|(a, b)| a - b).collect();
    Ok(norm2(&diff))
}

/// Wall-clock source for runtime columns; the core crate has no clock.
pub trait Clock {
    /// Seconds since an arbitrary origin.
    fn now(&self) -> f64;
}

/// Reports zero elapsed time.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed,
    External,
}

/// One (replication, method) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub replication: usize,
    pub method: Method,
    pub status: RowStatus,
    pub mse0: Option<f64>,
    pub err_beta: Option<f64>,
    pub runtime_secs: f64,
    /// Error message or placeholder note.
    pub note: String,
}

/// Fits one method on replication data.
pub fn fit_method(scenario: &Scenario, data: &ReplicationData, method: Method, r: usize) -> Result<BaselineFit> {
    let stream = scenario.replication_stream(r);
    let opts = &scenario.train.ridge;
    match method {
        Method::Rtl => {
            let net = NetworkConfig {
                seed: stream.purpose(Purpose::Network).seed(),
                ..scenario.net
            };
            let train = TrainConfig {
                seed: stream.purpose(Purpose::Split).seed(),
                ..scenario.train
            };
            let sf = fit_sources_with_validation(&data.sources, &data.source_validation, &net, &train)?;
            let tf = fit_target(&data.target, &sf.rep, opts)?;
            Ok(BaselineFit {
                method,
                beta0: tf.beta0.clone(),
                surface: RegressionSurface::Network {
                    beta: tf.beta0,
                    gamma: tf.gamma0,
                    rep: sf.rep,
                },
                details: FitDetails::Network {
                    best_epoch: sf.best_epoch,
                    stopped_epoch: sf.stopped_epoch,
                },
            })
        }
        Method::Stl => {
            let net = NetworkConfig {
                seed: stream.purpose(Purpose::Network).child(1).seed(),
                ..scenario.net
            };
            let train = TrainConfig {
                seed: stream.purpose(Purpose::Split).child(1).seed(),
                ..scenario.train
            };
            fit_stl(&data.target, &net, &train)
        }
        Method::Pool => {
            let mut domains = data.sources.clone();
            domains.push(data.target.clone());
            fit_pool(&domains, &data.target_validation, &scenario.knot_grid, opts)
        }
        Method::Meta => {
            let pool = fit_method(scenario, data, Method::Pool, r)?;
            let knots = match pool.details {
                FitDetails::Pool { interior_knots, .. } => interior_knots,
                _ => 0,
            };
            fit_meta(&data.sources, &data.target, knots, opts)
        }
        Method::Oracle => fit_oracle(&data.target, &scenario.design, opts),
        Method::Map | Method::TransLasso => Err(RtlError::InvalidConfig(format!("{method} is not computed here"))),
    }
}

/// All rows of replication `r`, in the scenario's method order.
pub fn run_replication(scenario: &Scenario, r: usize, clock: &dyn Clock) -> Result<Vec<BenchmarkRow>> {
    let data = replication_data(scenario, r, None)?;
    let beta_true = &data.coefficients.betas[0];
    let mut rows = Vec::with_capacity(scenario.methods.len());
    for &method in &scenario.methods {
        if method.is_external() {
            rows.push(BenchmarkRow {
                replication: r,
                method,
                status: RowStatus::External,
                mse0: None,
                err_beta: None,
                runtime_secs: 0.0,
                note: "external, not computed".into(),
            });
            continue;
        }
        let start = clock.now();
        let outcome = fit_method(scenario, &data, method, r).and_then(|fit| {
            let pred = fit.predict(&data.test.x, &data.test.z)?;
            Ok((prediction_mse(&pred, &data.test_truth)?, estimation_error(&fit.beta0, beta_true)?))
        });
        let runtime_secs = clock.now() - start;
        rows.push(match outcome {
            Ok((mse0, err)) => BenchmarkRow {
                replication: r,
                method,
                status: RowStatus::Ok,
                mse0: Some(mse0),
                err_beta: Some(err),
                runtime_secs,
                note: String::new(),
            },
            Err(e) => BenchmarkRow {
                replication: r,
                method,
                status: RowStatus::Failed,
                mse0: None,
                err_beta: None,
                runtime_secs,
                note: e.to_string(),
            },
        });
    }
    Ok(rows)
}

/// Per-method summary over non-failed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: Method,
    pub ok_rows: usize,
    pub failed_rows: usize,
    pub mean_mse0: Option<f64>,
    pub sd_mse0: Option<f64>,
    pub mean_err_beta: Option<f64>,
    pub sd_err_beta: Option<f64>,
    pub median_err_beta: Option<f64>,
    pub mean_runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: Scenario,
    pub rows: Vec<BenchmarkRow>,
    pub aggregates: Vec<MethodAggregate>,
}

impl BenchmarkReport {
    pub fn from_rows(scenario: Scenario, rows: Vec<BenchmarkRow>) -> Self {
        let aggregates = scenario.methods.iter().map(|&m| aggregate(m, &rows)).collect();
        BenchmarkReport {
            scenario,
            rows,
            aggregates,
        }
    }

    pub fn aggregate(&self, method: Method) -> Option<&MethodAggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Sample standard deviation with divisor `n − 1`; zero for one value.
pub fn sample_sd(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    Some(libm::sqrt(ss / (v.len() - 1) as f64))
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

fn aggregate(method: Method, rows: &[BenchmarkRow]) -> MethodAggregate {
    let mine: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.method == method).collect();
    let ok: Vec<&&BenchmarkRow> = mine.iter().filter(|r| r.status == RowStatus::Ok).collect();
    let mse: Vec<f64> = ok.iter().filter_map(|r| r.mse0).collect();
    let err: Vec<f64> = ok.iter().filter_map(|r| r.err_beta).collect();
    let runtimes: Vec<f64> = mine.iter().map(|r| r.runtime_secs).collect();
    MethodAggregate {
        method,
        ok_rows: ok.len(),
        failed_rows: mine.iter().filter(|r| r.status == RowStatus::Failed).count(),
        mean_mse0: mean(&mse),
        sd_mse0: sample_sd(&mse),
        mean_err_beta: mean(&err),
        sd_err_beta: sample_sd(&err),
        median_err_beta: median(&err),
        mean_runtime_secs: mean(&runtimes).unwrap_or(0.0),
    }
}

/// Sequential benchmark; replications run in index order.
pub fn run_benchmark(scenario: &Scenario, clock: &dyn Clock) -> Result<BenchmarkReport> {
    scenario.validate()?;
    let mut rows = Vec::new();
    for r in 0..scenario.replications {
        rows.extend(run_replication(scenario, r, clock)?);
    }
    Ok(BenchmarkReport::from_rows(scenario.clone(), rows))
}

/// Settings of a coverage study on `θ = αᵀβ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    /// Weights of `θ`. May be omitted only when `d` equals the true
    /// representation dimension, in which case every entry is `1/√d`.
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    /// Common value of every entry of `β₀` and `γ₀`.
    #[serde(default = "default_target_value")]
    pub target_value: f64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

fn default_target_value() -> f64 {
    1.0
}

fn default_level() -> f64 {
    0.95
}

fn default_bins() -> usize {
    20
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            alpha: None,
            target_value: default_target_value(),
            level: default_level(),
            histogram_bins: default_bins(),
        }
    }
}

impl CoverageConfig {
    pub fn alpha_for(&self, d: usize, r_true: usize) -> Result<Vec<f64>> {
        match &self.alpha {
            Some(a) if a.len() != d => Err(RtlError::mismatch("alpha length", d, a.len())),
            Some(a) => Ok(a.clone()),
            None if d == r_true => Ok(vec![1.0 / libm::sqrt(d as f64); d]),
            None => Err(RtlError::InvalidConfig(format!(
                "alpha must be given explicitly when d ({d}) differs from r_true ({r_true})"
            ))),
        }
    }
}

/// One replication of the coverage study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub replication: usize,
    pub status: RowStatus,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub covered: Option<bool>,
    pub runtime_secs: f64,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Distribution of `θ̂` over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalitySummary {
    pub theta: f64,
    pub replications: usize,
    pub failed: usize,
    pub avg_bias: f64,
    pub sd_of_estimates: f64,
    pub mean_se: f64,
    pub sd_of_se: f64,
    /// Fraction of successful replications whose interval holds `θ`.
    pub coverage: f64,
    pub level: f64,
    /// Bins of `θ̂ − θ` over `±4·SD` around zero; outliers land in the edge
    /// bins.
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario: Scenario,
    pub config: CoverageConfig,
    pub rows: Vec<CoverageRow>,
    pub summary: NormalitySummary,
}

/// RTL fit and interval for `θ` on replication `r`.
pub fn run_coverage_replication(
    scenario: &Scenario,
    config: &CoverageConfig,
    r: usize,
    clock: &dyn Clock,
) -> Result<CoverageRow> {
    let data = replication_data(scenario, r, Some(config.target_value))?;
    let alpha = config.alpha_for(scenario.design.d, scenario.design.r_true)?;
    let theta = dot(&alpha, &data.coefficients.betas[0]);
    let start = clock.now();
    let outcome = (|| {
        let fit = fit_method(scenario, &data, Method::Rtl, r)?;
        let rep = match &fit.surface {
            RegressionSurface::Network { rep, .. } => rep,
            _ => unreachable!("RTL yields a network surface"),
        };
        let tf = fit_target(&data.target, rep, &scenario.train.ridge)?;
        let inf = infer_target(&data.target.x, &tf, &scenario.train.ridge)?;
        linear_combination_inference(&tf.beta0, &inf.sigma_hat, inf.n0, &alpha, config.level)
    })();
    let runtime_secs = clock.now() - start;
    Ok(match outcome {
        Ok(ci) => CoverageRow {
            replication: r,
            status: RowStatus::Ok,
            estimate: Some(ci.estimate),
            se: Some(ci.se),
            lower: Some(ci.lower),
            upper: Some(ci.upper),
            covered: Some(ci.contains(theta)),
            runtime_secs,
            note: String::new(),
        },
        Err(e) => CoverageRow {
            replication: r,
            status: RowStatus::Failed,
            estimate: None,
            se: None,
            lower: None,
            upper: None,
            covered: None,
            runtime_secs,
            note: e.to_string(),
        },
    })
}

/// Aggregates coverage rows; `theta` is the true `αᵀβ₀`.
pub fn summarize_coverage(rows: &[CoverageRow], theta: f64, level: f64, bins: usize) -> Result<NormalitySummary> {
    let ok: Vec<&CoverageRow> = rows.iter().filter(|r| r.status == RowStatus::Ok).collect();
    if ok.is_empty() {
        return Err(RtlError::InsufficientData {
            domain: "coverage".into(),
            rows: 0,
            required: 1,
        });
    }
    let errors: Vec<f64> = ok.iter().filter_map(|r| r.estimate).map(|e| e - theta).collect();
    let ses: Vec<f64> = ok.iter().filter_map(|r| r.se).collect();
    let covered = ok.iter().filter(|r| r.covered == Some(true)).count();
    let sd = sample_sd(&errors).unwrap_or(0.0);
    let bins = bins.max(1);
    let half = if sd > 0.0 { 4.0 * sd } else { 1.0 };
    let width = 2.0 * half / bins as f64;
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lower: -half + b as f64 * width,
            upper: -half + (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for e in &errors {
        let idx = libm::floor((e + half) / width).clamp(0.0, (bins - 1) as f64) as usize;
        histogram[idx].count += 1;
    }
    Ok(NormalitySummary {
        theta,
        replications: rows.len(),
        failed: rows.len() - ok.len(),
        avg_bias: mean(&errors).unwrap_or(0.0),
        sd_of_estimates: sd,
        mean_se: mean(&ses).unwrap_or(0.0),
        sd_of_se: sample_sd(&ses).unwrap_or(0.0),
        coverage: covered as f64 / ok.len() as f64,
        level,
        histogram,
    })
}

/// `θ = αᵀβ₀` for the study's fixed target coefficients.
pub fn coverage_theta(scenario: &Scenario, config: &CoverageConfig) -> Result<f64> {
    let alpha = config.alpha_for(scenario.design.d, scenario.design.r_true)?;
    Ok(alpha.iter().sum::<f64>() * config.target_value)
}

pub fn check_coverage_scenario(scenario: &Scenario, config: &CoverageConfig) -> Result<()> {
    scenario.validate()?;
    if matches!(scenario.design.family, crate::simgen::DesignFamily::ToyIdentifiability) {
        return Err(RtlError::InvalidConfig(
            "coverage studies need an Additive, AdditiveFactor or Deep design".into(),
        ));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(RtlError::InvalidLevel(config.level));
    }
    config.alpha_for(scenario.design.d, scenario.design.r_true).map(|_| ())
}

/// Sequential coverage study.
pub fn coverage_study(scenario: &Scenario, config: &CoverageConfig, clock: &dyn Clock) -> Result<CoverageReport> {
    check_coverage_scenario(scenario, config)?;
    let rows = (0..scenario.replications)
        .map(|r| run_coverage_replication(scenario, config, r, clock))
        .collect::<Result<Vec<_>>>()?;
    let theta = coverage_theta(scenario, config)?;
    let summary = summarize_coverage(&rows, theta, config.level, config.histogram_bins)?;
    Ok(CoverageReport {
        scenario: scenario.clone(),
        config: config.clone(),
        rows,
        summary,
    })
}

/// Settings of the identifiability demonstration: a toy design with
/// `q = p = r`, heterogeneous sources, and a learned representation mapped
/// onto the true one over the diagonal `z = (t, …, t)`, `t ∈ [−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignDemoConfig {
    /// Representation and confounder dimension; one of 2, 3, 5.
    pub r: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub n_k: usize,
    pub noise_sd: f64,
    pub grid_points: usize,
    pub net: NetworkConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl AlignDemoConfig {
    /// Two-dimensional toy with desk-scale training.
    pub fn desk(seed: u64) -> Self {
        AlignDemoConfig {
            r: 2,
            k: 8,
            n_k: 2000,
            noise_sd: 0.3,
            grid_points: 200,
            net: desk_network(2, 2),
            train: desk_training(),
            seed,
        }
    }

    fn scenario(&self) -> Result<Scenario> {
        let dims = DesignDims {
            d: 1,
            q: self.r,
            r_true: self.r,
            noise_sd: self.noise_sd,
        };
        let stream = SeedStream::new(self.seed);
        let design = make_design(DesignFamily::ToyIdentifiability, dims, stream.purpose(Purpose::Design).seed())?;
        let mut scenario = Scenario::desk(design, CoefficientRegime::Heterogeneous, self.k, self.n_k, 1, self.r, 1, self.seed);
        scenario.net = self.net;
        scenario.train = self.train;
        scenario.n_test = 1;
        scenario.methods = vec![Method::Rtl];
        Ok(scenario)
    }
}

/// Learned and true representations on the demonstration grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignDemoResult {
    /// Grid abscissae `t`.
    pub grid: Vec<f64>,
    /// `R*` on the grid, m×r.
    pub truth: Matrix,
    pub alignment: Alignment,
    pub best_epoch: usize,
}

/// Trains on the toy sources and aligns the result with the truth.
pub fn align_demo(config: &AlignDemoConfig) -> Result<AlignDemoResult> {
    if config.grid_points < 2 {
        return Err(RtlError::InvalidConfig("grid_points must be at least 2".into()));
    }
    let scenario = config.scenario()?;
    scenario.validate()?;
    let data = replication_data(&scenario, 0, None)?;
    let stream = scenario.replication_stream(0);
    let net = NetworkConfig {
        seed: stream.purpose(Purpose::Network).seed(),
        ..scenario.net
    };
    let train = TrainConfig {
        seed: stream.purpose(Purpose::Split).seed(),
        ..scenario.train
    };
    let fit = fit_sources_with_validation(&data.sources, &data.source_validation, &net, &train)?;
    let m = config.grid_points;
    let grid: Vec<f64> = (0..m).map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64).collect();
    let z = Matrix::from_fn(m, config.r, |i, _| grid[i]);
    let truth = true_representation(&scenario.design, &z)?;
    let learned = repnet::forward(&fit.rep, &z)?;
    let alignment = align_representation(&learned, &truth, &train.ridge)?;
    Ok(AlignDemoResult {
        grid,
        truth,
        alignment,
        best_epoch: fit.best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{make_design, DesignDims, DesignFamily};

    #[test]
    fn metric_examples() {
        assert_eq!(prediction_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((prediction_mse(&[1.5, 2.5], &[1.0, 2.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!((prediction_mse(&[1.0, 3.0], &[0.0, 0.0]).unwrap() - 5.0).abs() < 1e-15);
        assert_eq!(estimation_error(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!((estimation_error(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 5.0).abs() < 1e-15);
        assert!(estimation_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]).unwrap() - libm::sqrt(5.0 / 3.0)).abs() < 1e-15);
    }

    fn tiny_scenario() -> Scenario {
        let design = make_design(
            DesignFamily::Additive,
            DesignDims {
                d: 2,
                q: 3,
                r_true: 2,
                noise_sd: 0.3,
            },
            4,
        )
        .unwrap();
        let mut s = Scenario::desk(design, CoefficientRegime::Homogeneous, 2, 40, 30, 2, 2, 9);
        s.net.width = 4;
        s.train.epochs = 5;
        s.n_test = 50;
        s.knot_grid = vec![0, 1];
        s
    }

    #[test]
    fn replication_data_is_seeded_and_sized() {
        let s = tiny_scenario();
        let a = replication_data(&s, 1, None).unwrap();
        assert_eq!(a, replication_data(&s, 1, None).unwrap());
        assert_ne!(a.target, replication_data(&s, 0, None).unwrap().target);
        assert_eq!(a.sources.len(), 2);
        assert_eq!(a.source_validation[0].n(), 12);
        assert_eq!(a.target_validation.n(), 9);
        assert_eq!(a.test.n(), 50);
        let fixed = replication_data(&s, 1, Some(1.0)).unwrap();
        assert_eq!(fixed.coefficients.betas[0], vec![1.0, 1.0]);
        assert_eq!(fixed.sources, a.sources);
    }

    #[test]
    fn benchmark_accounting() {
        let mut s = tiny_scenario();
        s.methods.push(Method::Map);
        let report = run_benchmark(&s, &NoClock).unwrap();
        assert_eq!(report.rows.len(), s.replications * s.methods.len());
        for agg in &report.aggregates {
            let vals: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.method == agg.method && r.status == RowStatus::Ok)
                .filter_map(|r| r.mse0)
                .collect();
            match agg.mean_mse0 {
                Some(m) => assert!((m - mean(&vals).unwrap()).abs() < 1e-12),
                None => assert!(vals.is_empty()),
            }
        }
        let map = report.aggregate(Method::Map).unwrap();
        assert_eq!(map.ok_rows, 0);
        assert_eq!(map.failed_rows, 0);
    }

    #[test]
    fn scenario_validation() {
        let mut s = tiny_scenario();
        s.methods.clear();
        assert!(s.validate().is_err());
        let mut s = tiny_scenario();
        s.net.output_dim = 3;
        assert!(s.validate().is_err());
        let mut s = tiny_scenario();
        s.replications = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn histogram_counts_everything() {
        let rows: Vec<CoverageRow> = (0..9)
            .map(|i| CoverageRow {
                replication: i,
                status: RowStatus::Ok,
                estimate: Some(1.0 + (i as f64 - 4.0) * 0.1),
                se: Some(0.1),
                lower: None,
                upper: None,
                covered: Some(i % 3 != 0),
                runtime_secs: 0.0,
                note: String::new(),
            })
            .collect();
        let s = summarize_coverage(&rows, 1.0, 0.95, 10).unwrap();
        assert_eq!(s.histogram.iter().map(|b| b.count).sum::<usize>(), 9);
        assert!(s.avg_bias.abs() < 1e-12);
        assert!((s.coverage - 6.0 / 9.0).abs() < 1e-15);
    }
}
