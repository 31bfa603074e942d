//! Inference on the target coefficient `β̂₀`: the orthogonalization matrix
//! `μ̂`, the sandwich covariance `Σ̂ = Ĵ₀⁻¹ Â Ĵ₀⁻¹`, normal confidence
//! intervals and rank diagnostics for the identifiability conditions.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RtlError};
use crate::estimator::TargetFit;
use crate::linalg::{dot, factor_normal, numerical_rank, Matrix, SolveOptions};

/// Relative singular value threshold below which a direction counts as null.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Sandwich covariance of `β̂₀` and its ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInference {
    /// `μ̂`, d×p.
    pub mu_hat: Matrix,
    #[serde(rename = "J0_hat")]
    pub j0_hat: Matrix,
    #[serde(rename = "A_hat")]
    pub a_hat: Matrix,
    #[serde(rename = "Sigma_hat")]
    pub sigma_hat: Matrix,
    /// `sqrt(Σ̂_jj / n₀)`.
    pub se: Vec<f64>,
    pub n0: usize,
}

/// Two-sided normal interval `estimate ∓ z·se`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub se: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// `μ̂ = (Σᵢ X₀ᵢ R̂ᵢᵀ)(Σᵢ R̂ᵢ R̂ᵢᵀ)⁻¹`.
pub fn estimate_mu(x0: &Matrix, rep_values: &Matrix, opts: &SolveOptions) -> Result<Matrix> {
    if x0.rows() != rep_values.rows() {
        return Err(RtlError::mismatch("estimate_mu rows", x0.rows(), rep_values.rows()));
    }
    if rep_values.rows() < rep_values.cols() {
        return Err(RtlError::InsufficientData {
            domain: "target".into(),
            rows: rep_values.rows(),
            required: rep_values.cols(),
        });
    }
    let chol = factor_normal(&rep_values.gram(), opts).map_err(|e| e.in_domain("representation Gram"))?;
    // μ̂ᵀ = (R̂ᵀR̂)⁻¹ R̂ᵀX₀.
    let cross = rep_values.t_matmul(x0)?;
    Ok(chol.solve_matrix(&cross).transpose())
}

/// `V̂ᵢ = X₀ᵢ − μ̂R̂ᵢ` row by row, n₀×d.
pub fn orthogonalized_covariates(x0: &Matrix, rep_values: &Matrix, mu_hat: &Matrix) -> Result<Matrix> {
    x0.sub(&rep_values.matmul_t(mu_hat)?)
}

fn symmetrize(m: &mut Matrix) {
    let n = m.rows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Sandwich covariance from the target fit and `μ̂`; `x0` are the target
/// covariates the fit was computed on.
pub fn estimate_covariance(
    x0: &Matrix,
    fit: &TargetFit,
    mu_hat: &Matrix,
    opts: &SolveOptions,
) -> Result<TargetInference> {
    let n0 = fit.n0();
    let d = x0.cols();
    if x0.rows() != n0 {
        return Err(RtlError::mismatch("target covariate rows", n0, x0.rows()));
    }
    if mu_hat.shape() != (d, fit.rep_values.cols()) {
        return Err(RtlError::mismatch(
            "mu_hat shape",
            d * fit.rep_values.cols(),
            mu_hat.rows() * mu_hat.cols(),
        ));
    }
    if n0 == 0 {
        return Err(RtlError::InsufficientData {
            domain: "target".into(),
            rows: 0,
            required: 1,
        });
    }
    let v = orthogonalized_covariates(x0, &fit.rep_values, mu_hat)?;
    let inv_n = 1.0 / n0 as f64;
    let j0_hat = v.gram().scale(inv_n);
    let weighted = Matrix::from_fn(n0, d, |i, j| fit.residuals[i] * v[(i, j)]);
    let a_hat = weighted.gram().scale(inv_n);

    let j_inv = factor_normal(&j0_hat, opts).map_err(|e| e.in_domain("J0_hat"))?.inverse();
    let mut sigma_hat = j_inv.matmul(&a_hat)?.matmul(&j_inv)?;
    symmetrize(&mut sigma_hat);
    let se = (0..d)
        .map(|j| libm::sqrt((sigma_hat[(j, j)] * inv_n).max(0.0)))
        .collect();
    Ok(TargetInference {
        mu_hat: mu_hat.clone(),
        j0_hat,
        a_hat,
        sigma_hat,
        se,
        n0,
    })
}

/// `estimate_mu` followed by `estimate_covariance` on the fit's own
/// representation values.
pub fn infer_target(x0: &Matrix, fit: &TargetFit, opts: &SolveOptions) -> Result<TargetInference> {
    let mu_hat = estimate_mu(x0, &fit.rep_values, opts)?;
    estimate_covariance(x0, fit, &mu_hat, opts)
}

/// Standard normal quantile, Wichura's AS241 (PPND16), relative accuracy
/// about 1e-16 on `(0, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
            + 45921.953931549871457)
            * r
            + 13731.693765509461125)
            * r
            + 1971.5909503065514427)
            * r
            + 133.14166789178437745)
            * r
            + 3.387132872796366608;
        let den = ((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
            + 21213.794301586595867)
            * r
            + 5394.1960214247511077)
            * r
            + 687.1870074920579083)
            * r
            + 42.313330701600911252)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = libm::sqrt(-libm::log(tail));
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734;
        let den = ((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966)
            * r
            + 0.14810397642748007459)
            * r
            + 0.68976733498510000455)
            * r
            + 1.6763848301838038494)
            * r
            + 2.05319162663775882187)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772;
        let den = ((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
            + 1.8463183175100546818e-5)
            * r
            + 7.868691311456132591e-4)
            * r
            + 0.0148753612908506148525)
            * r
            + 0.13692988092273580531)
            * r
            + 0.59983220655588793769)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// `estimate ∓ z_{(1+level)/2}·se`.
pub fn confidence_interval(estimate: f64, se: f64, level: f64) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(RtlError::InvalidLevel(level));
    }
    if !(se >= 0.0) || !se.is_finite() || !estimate.is_finite() {
        return Err(RtlError::NonFinite(alloc::format!(
            "interval inputs estimate={estimate}, se={se}"
        )));
    }
    let half = normal_quantile(0.5 * (1.0 + level)) * se;
    Ok(ConfidenceInterval {
        estimate,
        se,
        level,
        lower: estimate - half,
        upper: estimate + half,
    })
}

/// Per-coordinate intervals for `β̂₀`.
pub fn coordinate_intervals(beta0: &[f64], inference: &TargetInference, level: f64) -> Result<Vec<ConfidenceInterval>> {
    if beta0.len() != inference.se.len() {
        return Err(RtlError::mismatch("beta0 length", inference.se.len(), beta0.len()));
    }
    beta0
        .iter()
        .zip(&inference.se)
        .map(|(&b, &s)| confidence_interval(b, s, level))
        .collect()
}

/// Interval for `θ = αᵀβ₀` with `se = sqrt(αᵀΣ̂α / n₀)`.
pub fn linear_combination_inference(
    beta0: &[f64],
    sigma_hat: &Matrix,
    n0: usize,
    alpha: &[f64],
    level: f64,
) -> Result<ConfidenceInterval> {
    let d = beta0.len();
    if alpha.len() != d {
        return Err(RtlError::mismatch("alpha length", d, alpha.len()));
    }
    if sigma_hat.shape() != (d, d) {
        return Err(RtlError::mismatch("Sigma_hat shape", d * d, sigma_hat.rows() * sigma_hat.cols()));
    }
    if !(dot(alpha, alpha) > 0.0) {
        return Err(RtlError::InvalidConfig("alpha must be nonzero".into()));
    }
    if n0 == 0 {
        return Err(RtlError::InsufficientData {
            domain: "target".into(),
            rows: 0,
            required: 1,
        });
    }
    let var = dot(alpha, &sigma_hat.mul_vec(alpha)?) / n0 as f64;
    confidence_interval(dot(alpha, beta0), libm::sqrt(var.max(0.0)), level)
}

/// Rank checks for linear independence of the heads and invertibility of
/// the representation on a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub gamma_rank: usize,
    pub gamma_singular_values: Vec<f64>,
    pub rep_rank: usize,
    pub rep_singular_values: Vec<f64>,
    /// Representation dimension `p`.
    pub p: usize,
    /// The heads `γ_k` span ℝ^p.
    pub heads_span: bool,
    /// The representation values have full column rank `p`.
    pub rep_full_rank: bool,
}

impl IdentifiabilityReport {
    pub fn satisfied(&self) -> bool {
        self.heads_span && self.rep_full_rank
    }
}

/// Numerical ranks of the stacked `γ_k` (K×p) and of `rep_values` (m×p).
pub fn identifiability_diagnostics(gammas: &[Vec<f64>], rep_values: &Matrix) -> Result<IdentifiabilityReport> {
    let p = rep_values.cols();
    if gammas.is_empty() {
        return Err(RtlError::mismatch("source heads", 1, 0));
    }
    if let Some(g) = gammas.iter().find(|g| g.len() != p) {
        return Err(RtlError::mismatch("gamma length", p, g.len()));
    }
    let stacked = Matrix::from_rows(gammas);
    let (gamma_rank, gamma_singular_values) = numerical_rank(&stacked, RANK_TOLERANCE);
    let (rep_rank, rep_singular_values) = numerical_rank(rep_values, RANK_TOLERANCE);
    Ok(IdentifiabilityReport {
        gamma_rank,
        gamma_singular_values,
        rep_rank,
        rep_singular_values,
        p,
        heads_span: gamma_rank == p,
        rep_full_rank: rep_rank == p,
    })
}
