//! Sandwich covariance, orthogonality and interval properties.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rtl_core::estimator::{Dataset, TargetFit};
use rtl_core::inference::{
    confidence_interval, identifiability_diagnostics, infer_target, normal_quantile, orthogonalized_covariates,
};
use rtl_core::linalg::{Matrix, SolveOptions};

/// Random target with heteroskedastic noise and representation values that
/// are correlated with `X`.
fn instance(n: usize, d: usize, p: usize, seed: u64) -> (Dataset, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rep = Matrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let x = Matrix::from_fn(n, d, |i, j| rep[(i, j % p)] + rng.random_range(-1.0..1.0));
    let y = (0..n)
        .map(|i| {
            let e: f64 = rng.sample(StandardNormal);
            x.row(i).iter().sum::<f64>() + rep.row(i).iter().sum::<f64>() + (0.2 + x[(i, 0)].abs()) * e
        })
        .collect();
    (Dataset::new(y, x, Matrix::zeros(n, 1), "t").unwrap(), rep)
}

fn fit(ds: &Dataset, rep: Matrix) -> TargetFit {
    TargetFit::from_rep_values(ds, rep, &SolveOptions::strict()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn orthogonalized_covariates_are_orthogonal_to_representation(
        n in 12usize..60, d in 1usize..4, p in 1usize..4, seed in any::<u64>()
    ) {
        let (ds, rep) = instance(n, d, p, seed);
        let tf = fit(&ds, rep);
        let inf = infer_target(&ds.x, &tf, &SolveOptions::strict()).unwrap();
        let v = orthogonalized_covariates(&ds.x, &tf.rep_values, &inf.mu_hat).unwrap();
        let m = v.t_matmul(&tf.rep_values).unwrap().scale(1.0 / n as f64);
        prop_assert!(m.max_abs() <= 1e-8, "{}", m.max_abs());
    }

    #[test]
    fn sandwich_is_symmetric_psd(n in 12usize..60, d in 1usize..4, p in 1usize..4, seed in any::<u64>()) {
        let (ds, rep) = instance(n, d, p, seed);
        let tf = fit(&ds, rep);
        let inf = infer_target(&ds.x, &tf, &SolveOptions::strict()).unwrap();
        for m in [&inf.j0_hat, &inf.a_hat, &inf.sigma_hat] {
            prop_assert!(m.relative_asymmetry() <= 1e-9);
        }
        let s = DMatrix::from_row_slice(d, d, inf.sigma_hat.as_slice());
        let sym = (&s + s.transpose()) * 0.5;
        let min = sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-10);
        prop_assert!(inf.se.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn sandwich_is_invariant_to_representation_basis(seed in any::<u64>()) {
        let (ds, rep) = instance(40, 2, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let mut m = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        for j in 0..3 {
            m[(j, j)] += 4.0;
        }
        // Any invertible M gives rep·Mᵀ, a representation in another basis.
        let moved = rep.matmul_t(&m).unwrap();
        let opts = SolveOptions::strict();
        let a = infer_target(&ds.x, &fit(&ds, rep), &opts).unwrap();
        let b = infer_target(&ds.x, &fit(&ds, moved), &opts).unwrap();
        prop_assert!(a.sigma_hat.sub(&b.sigma_hat).unwrap().max_abs() <= 1e-6);
        prop_assert!(a.j0_hat.sub(&b.j0_hat).unwrap().max_abs() <= 1e-6);
    }

    #[test]
    fn interval_width_matches_quantile(est in -100.0f64..100.0, se in 0.0f64..10.0, level in 0.5f64..0.999) {
        let ci = confidence_interval(est, se, level).unwrap();
        prop_assert!(ci.lower <= ci.estimate && ci.estimate <= ci.upper);
        let z = normal_quantile(0.5 + level / 2.0);
        prop_assert!((ci.width() - 2.0 * z * se).abs() <= 1e-12 * (1.0 + ci.width()));
    }
}

#[test]
fn head_rank_matches_svd_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = 4;
    let gammas: Vec<Vec<f64>> = (0..2 * p).map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let rep = Matrix::from_fn(30, p, |_, _| rng.random_range(-1.0..1.0));
    let report = identifiability_diagnostics(&gammas, &rep).unwrap();
    let flat: Vec<f64> = gammas.iter().flatten().copied().collect();
    let svd = DMatrix::from_row_slice(2 * p, p, &flat).svd(false, false);
    let smax = svd.singular_values.max();
    let oracle_rank = svd.singular_values.iter().filter(|&&s| s > 1e-8 * smax).count();
    assert_eq!(report.gamma_rank, oracle_rank);
    assert_eq!(report.gamma_rank, p);
    assert!(report.satisfied());

    let few = identifiability_diagnostics(&gammas[..p - 1], &rep).unwrap();
    assert!(!few.heads_span);
}
