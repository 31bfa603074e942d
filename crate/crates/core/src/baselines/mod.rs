//! Comparator estimators: pooled spline regression, inverse-variance
//! meta-analysis, target-only network training and the true-representation
//! oracle.

pub mod spline;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RtlError};
use crate::estimator::{fit_sources, Dataset, TargetFit, TrainConfig};
use crate::inference::infer_target;
use crate::linalg::{least_squares, Matrix, SolveOptions};
use crate::repnet::{self, NetworkConfig, NetworkParams};
use crate::simgen::{true_regression, true_representation, SimulationDesign};

pub use spline::SplineBasis;

/// Default interior knot counts searched by Pool.
pub const DEFAULT_KNOT_GRID: [usize; 9] = [0, 1, 2, 3, 4, 5, 6, 7, 8];

/// Estimators compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "RTL")]
    Rtl,
    #[serde(rename = "STL")]
    Stl,
    Pool,
    Meta,
    Oracle,
    #[serde(rename = "MAP")]
    Map,
    #[serde(rename = "Trans-Lasso")]
    TransLasso,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Rtl,
        Method::Stl,
        Method::Pool,
        Method::Meta,
        Method::Oracle,
        Method::Map,
        Method::TransLasso,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Rtl => "RTL",
            Method::Stl => "STL",
            Method::Pool => "Pool",
            Method::Meta => "Meta",
            Method::Oracle => "Oracle",
            Method::Map => "MAP",
            Method::TransLasso => "Trans-Lasso",
        }
    }

    /// Methods reported as placeholders only.
    pub fn is_external(self) -> bool {
        matches!(self, Method::Map | Method::TransLasso)
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.label().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A fitted mean function `μ̂(x, z)` on the target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegressionSurface {
    /// `xᵀβ + sᵀc` with `s` the spline design row of `z`.
    Spline {
        beta: Vec<f64>,
        basis: SplineBasis,
        coef: Vec<f64>,
    },
    /// `xᵀβ + γᵀR(z)` with a learned network.
    Network {
        beta: Vec<f64>,
        gamma: Vec<f64>,
        rep: NetworkParams,
    },
    /// `xᵀβ + γᵀR*(z)` with the design's true representation.
    TrueRepresentation {
        beta: Vec<f64>,
        gamma: Vec<f64>,
        design: SimulationDesign,
    },
}

impl RegressionSurface {
    pub fn predict(&self, x: &Matrix, z: &Matrix) -> Result<Vec<f64>> {
        if x.rows() != z.rows() {
            return Err(RtlError::mismatch("X/Z rows", x.rows(), z.rows()));
        }
        match self {
            RegressionSurface::Spline { beta, basis, coef } => {
                let mut out = x.mul_vec(beta)?;
                let s = basis.design(z)?.mul_vec(coef)?;
                out.iter_mut().zip(s).for_each(|(o, v)| *o += v);
                Ok(out)
            }
            RegressionSurface::Network { beta, gamma, rep } => {
                let mut out = x.mul_vec(beta)?;
                let g = repnet::forward(rep, z)?.mul_vec(gamma)?;
                out.iter_mut().zip(g).for_each(|(o, v)| *o += v);
                Ok(out)
            }
            RegressionSurface::TrueRepresentation { beta, gamma, design } => {
                true_regression(design, beta, gamma, x, z)
            }
        }
    }
}

/// Method-specific details kept alongside a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FitDetails {
    Pool {
        interior_knots: usize,
        /// `(knot count, target validation MSE)` for every feasible grid point.
        validation_mse: Vec<(usize, f64)>,
    },
    Meta {
        interior_knots: usize,
        /// Per domain, per coordinate normalized weights.
        weights: Vec<Vec<f64>>,
    },
    Network {
        best_epoch: usize,
        stopped_epoch: usize,
    },
    Oracle,
}

/// A comparator fit on the target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit {
    pub method: Method,
    pub beta0: Vec<f64>,
    pub surface: RegressionSurface,
    pub details: FitDetails,
}

impl BaselineFit {
    pub fn predict(&self, x: &Matrix, z: &Matrix) -> Result<Vec<f64>> {
        self.surface.predict(x, z)
    }
}

fn check_shared_dims(domains: &[&Dataset]) -> Result<(usize, usize)> {
    let first = domains.first().ok_or_else(|| RtlError::mismatch("domains", 1, 0))?;
    let (d, q) = (first.d(), first.q());
    for ds in domains {
        ds.validate()?;
        if ds.d() != d {
            return Err(RtlError::mismatch("domain d", d, ds.d()));
        }
        if ds.q() != q {
            return Err(RtlError::mismatch("domain q", q, ds.q()));
        }
    }
    Ok((d, q))
}

/// Least squares of `y` on `[X, spline design(Z)]`, split into `(β, c)`.
fn fit_spline_linear(data: &Dataset, basis: &SplineBasis, opts: &SolveOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let design = data.x.hcat(&basis.design(&data.z)?)?;
    let coef = least_squares(&design, &data.y, opts).map_err(|e| e.in_domain(&data.domain_id))?;
    let (beta, c) = coef.split_at(data.d());
    Ok((beta.to_vec(), c.to_vec()))
}

fn stack(domains: &[&Dataset]) -> Result<Dataset> {
    let xs: Vec<&Matrix> = domains.iter().map(|d| &d.x).collect();
    let zs: Vec<&Matrix> = domains.iter().map(|d| &d.z).collect();
    let y = domains.iter().flat_map(|d| d.y.iter().copied()).collect();
    Dataset::new(y, Matrix::vstack(&xs)?, Matrix::vstack(&zs)?, "pooled")
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / y.len() as f64
}

/// Pooled regression: every domain shares one `β` and one additive spline
/// surface. The interior knot count minimizing MSE on `target_validation`
/// is kept; ties go to the smaller count.
pub fn fit_pool(
    domains: &[Dataset],
    target_validation: &Dataset,
    knot_grid: &[usize],
    opts: &SolveOptions,
) -> Result<BaselineFit> {
    let refs: Vec<&Dataset> = domains.iter().chain(core::iter::once(target_validation)).collect();
    let (_, q) = check_shared_dims(&refs)?;
    if knot_grid.is_empty() {
        return Err(RtlError::InvalidConfig("knot grid must be nonempty".into()));
    }
    let pooled = stack(&refs[..domains.len()])?;
    let mut best: Option<(f64, usize, Vec<f64>, Vec<f64>)> = None;
    let mut scores = Vec::with_capacity(knot_grid.len());
    let mut last_err = None;
    for &m in knot_grid {
        let basis = SplineBasis::uniform(q, m);
        if pooled.n() < pooled.d() + basis.design_width() {
            continue;
        }
        let (beta, coef) = match fit_spline_linear(&pooled, &basis, opts) {
            Ok(v) => v,
            Err(e) if e.is_numeric() => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let surface = RegressionSurface::Spline {
            beta: beta.clone(),
            basis,
            coef: coef.clone(),
        };
        let score = mse(&surface.predict(&target_validation.x, &target_validation.z)?, &target_validation.y);
        scores.push((m, score));
        if best.as_ref().map_or(true, |(s, ..)| score < *s) {
            best = Some((score, m, beta, coef));
        }
    }
    let (_, m, beta, coef) = best.ok_or_else(|| {
        last_err.unwrap_or_else(|| RtlError::InsufficientData {
            domain: "pooled".into(),
            rows: pooled.n(),
            required: pooled.d() + SplineBasis::uniform(q, 0).design_width(),
        })
    })?;
    Ok(BaselineFit {
        method: Method::Pool,
        beta0: beta.clone(),
        surface: RegressionSurface::Spline {
            beta,
            basis: SplineBasis::uniform(q, m),
            coef,
        },
        details: FitDetails::Pool {
            interior_knots: m,
            validation_mse: scores,
        },
    })
}

/// One domain's coefficient estimate with coordinatewise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEstimate {
    pub beta: Vec<f64>,
    /// `Var(β̂_j)` for every coordinate.
    pub variance: Vec<f64>,
}

/// Spline partially linear fit of one domain with sandwich variances,
/// treating the spline design as the representation.
pub fn spline_domain_estimate(data: &Dataset, basis: &SplineBasis, opts: &SolveOptions) -> Result<DomainEstimate> {
    let features = basis.design(&data.z)?;
    let fit = TargetFit::from_rep_values(data, features, opts)?;
    let inf = infer_target(&data.x, &fit, opts).map_err(|e| e.in_domain(&data.domain_id))?;
    let variance = inf.se.iter().map(|s| s * s).collect();
    Ok(DomainEstimate {
        beta: fit.beta0,
        variance,
    })
}

/// Coordinatewise inverse-variance weighted mean and the normalized weights
/// (per estimate, per coordinate).
pub fn meta_combine(estimates: &[DomainEstimate]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let first = estimates.first().ok_or_else(|| RtlError::mismatch("meta estimates", 1, 0))?;
    let d = first.beta.len();
    for (k, e) in estimates.iter().enumerate() {
        if e.beta.len() != d || e.variance.len() != d {
            return Err(RtlError::mismatch("meta estimate length", d, e.beta.len().min(e.variance.len())));
        }
        if let Some((j, &v)) = e.variance.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(RtlError::NonpositiveVariance {
                domain: k,
                coordinate: j,
                value: v,
            });
        }
    }
    let mut beta = Vec::with_capacity(d);
    let mut weights = alloc::vec![alloc::vec![0.0; d]; estimates.len()];
    for j in 0..d {
        let total: f64 = estimates.iter().map(|e| 1.0 / e.variance[j]).sum();
        let mut acc = 0.0;
        for (k, e) in estimates.iter().enumerate() {
            let w = (1.0 / e.variance[j]) / total;
            weights[k][j] = w;
            acc += w * e.beta[j];
        }
        beta.push(acc);
    }
    Ok((beta, weights))
}

/// Inverse-variance meta-analysis over the sources and the target.
///
/// Every domain is fitted with the additive spline model using at most
/// `interior_knots` knots, reduced until the smallest domain keeps at least
/// one residual degree of freedom. The target surface keeps the combined
/// `β` and refits the spline part on `Y₀ − X₀β`.
pub fn fit_meta(sources: &[Dataset], target: &Dataset, interior_knots: usize, opts: &SolveOptions) -> Result<BaselineFit> {
    let refs: Vec<&Dataset> = sources.iter().chain(core::iter::once(target)).collect();
    let (d, q) = check_shared_dims(&refs)?;
    let n_min = refs.iter().map(|ds| ds.n()).min().unwrap_or(0);
    let mut m = interior_knots;
    loop {
        if n_min > d + SplineBasis::uniform(q, m).design_width() {
            break;
        }
        if m == 0 {
            return Err(RtlError::InsufficientData {
                domain: "meta".into(),
                rows: n_min,
                required: d + SplineBasis::uniform(q, 0).design_width() + 1,
            });
        }
        m -= 1;
    }
    let basis = SplineBasis::uniform(q, m);
    let estimates = refs
        .iter()
        .map(|ds| spline_domain_estimate(ds, &basis, opts))
        .collect::<Result<Vec<_>>>()?;
    let (beta, weights) = meta_combine(&estimates)?;
    let partial = target.partial_residual(&beta)?;
    let coef = least_squares(&basis.design(&target.z)?, &partial, opts).map_err(|e| e.in_domain(&target.domain_id))?;
    Ok(BaselineFit {
        method: Method::Meta,
        beta0: beta.clone(),
        surface: RegressionSurface::Spline { beta, basis, coef },
        details: FitDetails::Meta {
            interior_knots: m,
            weights,
        },
    })
}

/// Target-only network: the source step run with the target as its single
/// domain.
pub fn fit_stl(target: &Dataset, net_cfg: &NetworkConfig, train_cfg: &TrainConfig) -> Result<BaselineFit> {
    let sf = fit_sources(core::slice::from_ref(target), net_cfg, train_cfg)?;
    let beta = sf.betas[0].clone();
    Ok(BaselineFit {
        method: Method::Stl,
        beta0: beta.clone(),
        surface: RegressionSurface::Network {
            beta,
            gamma: sf.gammas[0].clone(),
            rep: sf.rep,
        },
        details: FitDetails::Network {
            best_epoch: sf.best_epoch,
            stopped_epoch: sf.stopped_epoch,
        },
    })
}

/// Least squares of `Y₀` on `[X₀, R*(Z₀)]`.
pub fn fit_oracle(target: &Dataset, design: &SimulationDesign, opts: &SolveOptions) -> Result<BaselineFit> {
    let truth = true_representation(design, &target.z)?;
    let fit = TargetFit::from_rep_values(target, truth, opts)?;
    Ok(BaselineFit {
        method: Method::Oracle,
        beta0: fit.beta0.clone(),
        surface: RegressionSurface::TrueRepresentation {
            beta: fit.beta0,
            gamma: fit.gamma0,
            design: design.clone(),
        },
        details: FitDetails::Oracle,
    })
}

/// Report label for placeholder methods.
pub fn external_note(method: Method) -> Option<String> {
    method.is_external().then(|| String::from("external, not computed"))
}
