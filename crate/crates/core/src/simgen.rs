//! Seeded data-generating processes: additive, additive-factor, deep
//! (two-layer function tree) and the low-dimensional identifiability toy.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RtlError};
use crate::estimator::Dataset;
use crate::linalg::{dot, Matrix};
use crate::rng::{Purpose, SeedStream};

/// Bound applied to every pool-function output.
pub const OUTPUT_CLIP: f64 = 10.0;

/// Univariate building blocks of the ground-truth representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolFunction {
    /// `sin(x)`
    Sin,
    /// `2√|x| − 1`
    SqrtAbs,
    /// `(1 − |x|)²`
    OneMinusAbsSq,
    /// `1 / (1 + e^{−x})`
    Logistic,
    /// `cos(πx/2)`
    CosHalfPi,
    /// `−cos(x)`
    NegCos,
    /// `cos(2x)`
    Cos2x,
    /// `sin(πx)`
    SinPi,
    /// `cos(πx)`
    CosPi,
    /// `2√(x + 0.5) − 1`, argument floored at zero
    SqrtShift,
    /// `(1 − |x − 0.5|)²`
    OneMinusAbsShiftSq,
    /// `1 / (1 + e^{x})`
    LogisticNeg,
    /// `tan(x + 0.1)`
    Tan,
    /// `log(x + 1.5)`, argument floored at 1e-3
    Log,
    /// `e^x`
    Exp,
    /// `x²`
    Square,
    /// `arctan(x)`
    Arctan,
    /// `−sin(x)`
    NegSin,
}

impl PoolFunction {
    /// Five-function pool of the additive designs.
    pub const ADDITIVE_POOL: [PoolFunction; 5] = [
        PoolFunction::Sin,
        PoolFunction::SqrtAbs,
        PoolFunction::OneMinusAbsSq,
        PoolFunction::Logistic,
        PoolFunction::CosHalfPi,
    ];

    /// Thirteen-function pool of the deep design.
    pub const DEEP_POOL: [PoolFunction; 13] = [
        PoolFunction::Sin,
        PoolFunction::NegCos,
        PoolFunction::Cos2x,
        PoolFunction::SinPi,
        PoolFunction::CosPi,
        PoolFunction::SqrtShift,
        PoolFunction::OneMinusAbsShiftSq,
        PoolFunction::LogisticNeg,
        PoolFunction::Tan,
        PoolFunction::Log,
        PoolFunction::Exp,
        PoolFunction::Square,
        PoolFunction::Arctan,
    ];

    /// Raw value before clipping.
    pub fn raw(self, x: f64) -> f64 {
        use PoolFunction::*;
        match self {
            Sin => libm::sin(x),
            SqrtAbs => 2.0 * libm::sqrt(x.abs()) - 1.0,
            OneMinusAbsSq => {
                let t = 1.0 - x.abs();
                t * t
            }
            Logistic => 1.0 / (1.0 + libm::exp(-x)),
            CosHalfPi => libm::cos(PI * x / 2.0),
            NegCos => -libm::cos(x),
            Cos2x => libm::cos(2.0 * x),
            SinPi => libm::sin(PI * x),
            CosPi => libm::cos(PI * x),
            SqrtShift => 2.0 * libm::sqrt((x + 0.5).max(0.0)) - 1.0,
            OneMinusAbsShiftSq => {
                let t = 1.0 - (x - 0.5).abs();
                t * t
            }
            LogisticNeg => 1.0 / (1.0 + libm::exp(x)),
            Tan => libm::tan(x + 0.1),
            Log => libm::log((x + 1.5).max(1e-3)),
            Exp => libm::exp(x),
            Square => x * x,
            Arctan => libm::atan(x),
            NegSin => -libm::sin(x),
        }
    }

    /// Value clipped to `[−10, 10]`; NaN maps to the clip bound.
    pub fn eval(self, x: f64) -> f64 {
        let v = self.raw(x);
        if v.is_nan() {
            OUTPUT_CLIP
        } else {
            v.clamp(-OUTPUT_CLIP, OUTPUT_CLIP)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignFamily {
    Additive,
    AdditiveFactor,
    Deep,
    ToyIdentifiability,
}

/// One node of the deep design's first layer: a pool function applied to the
/// sum of the listed confounders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FNode {
    pub function: PoolFunction,
    pub inputs: Vec<usize>,
}

/// Second-layer node: a pool function applied to the sum of two f-nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HNode {
    pub function: PoolFunction,
    pub inputs: [usize; 2],
}

/// Wiring of the deep design (q = 10, p = 5), zero-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepDesign {
    pub f_nodes: Vec<FNode>,
    pub h_nodes: Vec<HNode>,
}

impl DeepDesign {
    /// f₁←(z₁,z₂), f₂←(z₃,z₄), f₃←(z₅,z₆), f₄←(z₇,z₈), f₅←(z₈,z₉), f₆←(z₉,z₁₀).
    pub const F_INPUTS: [[usize; 2]; 6] = [[0, 1], [2, 3], [4, 5], [6, 7], [7, 8], [8, 9]];

    pub fn new(f_functions: [PoolFunction; 6], h_functions: [PoolFunction; 5]) -> Self {
        let f_nodes = f_functions
            .iter()
            .zip(Self::F_INPUTS)
            .map(|(&function, inputs)| FNode {
                function,
                inputs: inputs.to_vec(),
            })
            .collect();
        let h_nodes = h_functions
            .iter()
            .enumerate()
            .map(|(i, &function)| HNode {
                function,
                inputs: [i, i + 1],
            })
            .collect();
        DeepDesign { f_nodes, h_nodes }
    }

    /// Checks node counts and index ranges against `q`.
    pub fn validate(&self, q: usize) -> Result<()> {
        if self.f_nodes.len() != 6 || self.h_nodes.len() != 5 {
            return Err(RtlError::UnsupportedDims(format!(
                "deep design needs 6 f-nodes and 5 h-nodes, got {} and {}",
                self.f_nodes.len(),
                self.h_nodes.len()
            )));
        }
        let bad_f = self.f_nodes.iter().any(|f| f.inputs.iter().any(|&j| j >= q));
        let bad_h = self.h_nodes.iter().any(|h| h.inputs.iter().any(|&j| j >= 6));
        if bad_f || bad_h {
            return Err(RtlError::UnsupportedDims("deep design wiring out of range".into()));
        }
        Ok(())
    }

    fn eval_row(&self, z: &[f64], out: &mut [f64]) {
        let mut f = [0.0; 6];
        for (fv, node) in f.iter_mut().zip(&self.f_nodes) {
            let s: f64 = node.inputs.iter().map(|&j| z[j]).sum();
            *fv = node.function.eval(s);
        }
        for (o, node) in out.iter_mut().zip(&self.h_nodes) {
            *o = node.function.eval(f[node.inputs[0]] + f[node.inputs[1]]);
        }
    }
}

/// Dimensions requested from [`make_design`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignDims {
    pub d: usize,
    pub q: usize,
    /// True representation dimension.
    pub r_true: usize,
    pub noise_sd: f64,
}

/// Complete description of a data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub family: DesignFamily,
    pub d: usize,
    pub q: usize,
    pub r_true: usize,
    /// Per-component functions (additive, additive-factor and toy families).
    #[serde(default)]
    pub function_assignment: Vec<PoolFunction>,
    /// `B` (r×q) of the additive-factor family.
    #[serde(default)]
    pub factor_b: Option<Matrix>,
    #[serde(default)]
    pub deep_wiring: Option<DeepDesign>,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Toy assignments for r = 2, 3, 5.
fn toy_functions(r: usize) -> Option<Vec<PoolFunction>> {
    use PoolFunction::*;
    match r {
        2 => Some(vec![SinPi, CosPi]),
        3 => Some(vec![SqrtAbs, SinPi, CosPi]),
        5 => Some(vec![OneMinusAbsSq, Logistic, NegSin, SinPi, CosPi]),
        _ => None,
    }
}

/// Draws the function assignment (and `B` or deep wiring) from `seed`.
pub fn make_design(family: DesignFamily, dims: DesignDims, seed: u64) -> Result<SimulationDesign> {
    let DesignDims { d, q, r_true, noise_sd } = dims;
    if d == 0 || q == 0 || r_true == 0 {
        return Err(RtlError::UnsupportedDims("d, q and r_true must be at least 1".into()));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(RtlError::InvalidConfig(format!("noise_sd must be nonnegative, got {noise_sd}")));
    }
    let mut rng = SeedStream::new(seed).purpose(Purpose::Design).rng();
    let mut design = SimulationDesign {
        family,
        d,
        q,
        r_true,
        function_assignment: Vec::new(),
        factor_b: None,
        deep_wiring: None,
        noise_sd,
        seed,
    };
    match family {
        DesignFamily::Additive => {
            if q < r_true {
                return Err(RtlError::UnsupportedDims(format!(
                    "additive design needs q >= r_true, got q={q}, r_true={r_true}"
                )));
            }
            design.function_assignment = (0..r_true)
                .map(|_| *PoolFunction::ADDITIVE_POOL.choose(&mut rng).unwrap())
                .collect();
        }
        DesignFamily::AdditiveFactor => {
            design.function_assignment = (0..r_true)
                .map(|_| *PoolFunction::ADDITIVE_POOL.choose(&mut rng).unwrap())
                .collect();
            let normal = Normal::new(0.0, libm::sqrt(1.0 / q as f64)).expect("finite sd");
            design.factor_b = Some(Matrix::from_fn(r_true, q, |_, _| normal.sample(&mut rng)));
        }
        DesignFamily::Deep => {
            if q != 10 || r_true != 5 {
                return Err(RtlError::UnsupportedDims(format!(
                    "deep design requires q=10 and r_true=5, got q={q}, r_true={r_true}"
                )));
            }
            let mut pick = || *PoolFunction::DEEP_POOL.choose(&mut rng).unwrap();
            let f = [pick(), pick(), pick(), pick(), pick(), pick()];
            let h = [pick(), pick(), pick(), pick(), pick()];
            design.deep_wiring = Some(DeepDesign::new(f, h));
        }
        DesignFamily::ToyIdentifiability => {
            if q != r_true {
                return Err(RtlError::UnsupportedDims(format!(
                    "toy design requires q = r_true, got q={q}, r_true={r_true}"
                )));
            }
            design.function_assignment = toy_functions(r_true).ok_or_else(|| {
                RtlError::UnsupportedDims(format!("toy design supports r_true in {{2, 3, 5}}, got {r_true}"))
            })?;
        }
    }
    Ok(design)
}

impl SimulationDesign {
    /// Checks that the optional fields required by the family are present.
    pub fn validate(&self) -> Result<()> {
        match self.family {
            DesignFamily::Additive | DesignFamily::ToyIdentifiability => {
                if self.function_assignment.len() != self.r_true || self.q < self.r_true {
                    return Err(RtlError::UnsupportedDims("function assignment does not match r_true".into()));
                }
            }
            DesignFamily::AdditiveFactor => {
                let ok = self
                    .factor_b
                    .as_ref()
                    .is_some_and(|b| b.shape() == (self.r_true, self.q));
                if !ok || self.function_assignment.len() != self.r_true {
                    return Err(RtlError::UnsupportedDims("factor design needs B of shape r_true×q".into()));
                }
            }
            DesignFamily::Deep => {
                let wiring = self
                    .deep_wiring
                    .as_ref()
                    .ok_or_else(|| RtlError::UnsupportedDims("deep design without wiring".into()))?;
                wiring.validate(self.q)?;
                if self.r_true != 5 {
                    return Err(RtlError::UnsupportedDims("deep design has r_true = 5".into()));
                }
            }
        }
        Ok(())
    }
}

/// Evaluates the ground-truth representation `R*(z)` row by row (n×r_true).
pub fn true_representation(design: &SimulationDesign, z: &Matrix) -> Result<Matrix> {
    design.validate()?;
    if z.cols() != design.q {
        return Err(RtlError::mismatch("design q", design.q, z.cols()));
    }
    let n = z.rows();
    let r = design.r_true;
    let mut out = Matrix::zeros(n, r);
    match design.family {
        DesignFamily::Additive | DesignFamily::ToyIdentifiability => {
            for i in 0..n {
                let zi = z.row(i);
                for (j, f) in design.function_assignment.iter().enumerate() {
                    out[(i, j)] = f.eval(zi[j]);
                }
            }
        }
        DesignFamily::AdditiveFactor => {
            let b = design.factor_b.as_ref().expect("validated");
            for i in 0..n {
                let zi = z.row(i);
                for (j, f) in design.function_assignment.iter().enumerate() {
                    out[(i, j)] = f.eval(dot(b.row(j), zi));
                }
            }
        }
        DesignFamily::Deep => {
            let wiring = design.deep_wiring.as_ref().expect("validated");
            for i in 0..n {
                let zi = z.row(i).to_vec();
                wiring.eval_row(&zi, out.row_mut(i));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientRegime {
    Homogeneous,
    Heterogeneous,
}

/// Coefficients for the target (index 0) and `K` sources (1..=K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub betas: Vec<Vec<f64>>,
    pub gammas: Vec<Vec<f64>>,
    pub regime: CoefficientRegime,
}

impl CoefficientSet {
    pub fn k(&self) -> usize {
        self.betas.len() - 1
    }
}

/// Standard normal coefficients, shared by all domains when homogeneous.
pub fn make_coefficients(k: usize, d: usize, p: usize, regime: CoefficientRegime, seed: u64) -> Result<CoefficientSet> {
    if k == 0 {
        return Err(RtlError::InvalidConfig("at least one source domain is required".into()));
    }
    let root = SeedStream::new(seed).purpose(Purpose::Coefficients);
    let draw = |stream: SeedStream, len: usize| -> Vec<f64> {
        let mut rng = stream.rng();
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    };
    let (betas, gammas) = match regime {
        CoefficientRegime::Homogeneous => {
            let beta = draw(root.child(0).child(0), d);
            let gamma = draw(root.child(0).child(1), p);
            (vec![beta; k + 1], vec![gamma; k + 1])
        }
        CoefficientRegime::Heterogeneous => (0..=k)
            .map(|dom| {
                (
                    draw(root.child(dom as u64).child(0), d),
                    draw(root.child(dom as u64).child(1), p),
                )
            })
            .unzip(),
    };
    Ok(CoefficientSet { betas, gammas, regime })
}

/// `n` draws with `X ~ U[−1,1]^d`, `Z ~ U[−1,1]^q`,
/// `Y = βᵀX + γᵀR*(Z) + ε`, `ε ~ N(0, noise_sd²)`.
pub fn generate_domain(
    design: &SimulationDesign,
    beta: &[f64],
    gamma: &[f64],
    n: usize,
    seed: u64,
    domain_id: impl Into<String>,
) -> Result<Dataset> {
    if beta.len() != design.d {
        return Err(RtlError::mismatch("beta length", design.d, beta.len()));
    }
    if gamma.len() != design.r_true {
        return Err(RtlError::mismatch("gamma length", design.r_true, gamma.len()));
    }
    let root = SeedStream::new(seed);
    let mut cov_rng = root.child(1).rng();
    let x = Matrix::from_fn(n, design.d, |_, _| cov_rng.random_range(-1.0..=1.0));
    let z = Matrix::from_fn(n, design.q, |_, _| cov_rng.random_range(-1.0..=1.0));
    let mut y = true_regression(design, beta, gamma, &x, &z)?;
    if design.noise_sd > 0.0 {
        let mut noise_rng = root.purpose(Purpose::Noise).rng();
        for v in &mut y {
            let e: f64 = StandardNormal.sample(&mut noise_rng);
            *v += design.noise_sd * e;
        }
    }
    Dataset::new(y, x, z, domain_id)
}

/// Noiseless mean `βᵀX_i + γᵀR*(Z_i)`.
pub fn true_regression(design: &SimulationDesign, beta: &[f64], gamma: &[f64], x: &Matrix, z: &Matrix) -> Result<Vec<f64>> {
    if x.rows() != z.rows() {
        return Err(RtlError::mismatch("X/Z rows", x.rows(), z.rows()));
    }
    let r = true_representation(design, z)?;
    let mut y = x.mul_vec(beta)?;
    let g = r.mul_vec(gamma)?;
    y.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(d: usize, q: usize, r: usize) -> DesignDims {
        DesignDims { d, q, r_true: r, noise_sd: 0.3 }
    }

    #[test]
    fn toy_values_at_half() {
        let design = make_design(DesignFamily::ToyIdentifiability, dims(1, 2, 2), 0).unwrap();
        let r = true_representation(&design, &Matrix::from_rows(&[[0.5, 0.5]])).unwrap();
        assert!((r[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(r[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn logistic_at_zero() {
        let mut design = make_design(DesignFamily::Additive, dims(1, 3, 3), 4).unwrap();
        design.function_assignment = vec![PoolFunction::Logistic; 3];
        let r = true_representation(&design, &Matrix::zeros(1, 3)).unwrap();
        assert_eq!(r.row(0), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn deep_wiring_matches_figure() {
        let design = make_design(DesignFamily::Deep, dims(5, 10, 5), 3).unwrap();
        let w = design.deep_wiring.as_ref().unwrap();
        let f: Vec<Vec<usize>> = w.f_nodes.iter().map(|n| n.inputs.clone()).collect();
        assert_eq!(
            f,
            vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7], vec![7, 8], vec![8, 9]]
        );
        let h: Vec<[usize; 2]> = w.h_nodes.iter().map(|n| n.inputs).collect();
        assert_eq!(h, vec![[0, 1], [1, 2], [2, 3], [3, 4], [4, 5]]);
    }

    #[test]
    fn deep_rejects_other_dims() {
        assert!(matches!(
            make_design(DesignFamily::Deep, dims(5, 20, 5), 0),
            Err(RtlError::UnsupportedDims(_))
        ));
        assert!(matches!(
            make_design(DesignFamily::ToyIdentifiability, dims(1, 4, 4), 0),
            Err(RtlError::UnsupportedDims(_))
        ));
    }

    #[test]
    fn bounded_pool_never_clips_on_moderate_inputs() {
        use PoolFunction::*;
        let bounded = [Sin, NegCos, Cos2x, SinPi, CosPi, SqrtShift, OneMinusAbsShiftSq, LogisticNeg, Arctan, Logistic, CosHalfPi, NegSin, SqrtAbs, OneMinusAbsSq];
        for f in bounded {
            for k in 0..=500 {
                let x = -2.5 + 5.0 * k as f64 / 500.0;
                assert_eq!(f.eval(x), f.raw(x), "{f:?} at {x}");
            }
        }
        assert_eq!(Exp.eval(5.0), OUTPUT_CLIP);
        assert_eq!(Log.eval(-3.0), libm::log(1e-3));
        assert_eq!(Tan.eval(core::f64::consts::FRAC_PI_2 - 0.1 - 1e-9), OUTPUT_CLIP);
    }

    #[test]
    fn homogeneous_shares_coefficients() {
        let c = make_coefficients(4, 3, 2, CoefficientRegime::Homogeneous, 9).unwrap();
        assert!(c.betas.iter().all(|b| *b == c.betas[0]));
        assert!(c.gammas.iter().all(|g| *g == c.gammas[0]));
        let h = make_coefficients(2, 3, 2, CoefficientRegime::Heterogeneous, 9).unwrap();
        assert!(h.betas[1] != h.betas[2] || h.betas[0] != h.betas[1]);
    }

    #[test]
    fn noiseless_zero_gamma_is_linear() {
        let mut design = make_design(DesignFamily::Additive, dims(2, 3, 2), 1).unwrap();
        design.noise_sd = 0.0;
        let beta = [0.5, -2.0];
        let ds = generate_domain(&design, &beta, &[0.0, 0.0], 50, 2, "s").unwrap();
        let r = ds.partial_residual(&beta).unwrap();
        assert!(r.iter().all(|v| *v == 0.0));
        assert!(ds.x.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
