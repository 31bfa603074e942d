//! Source and target fitting against closed-form and pseudo-inverse oracles.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtl_core::estimator::{
    align_representation, fit_sources, fit_sources_with_validation, fit_target, solve_domain_linear, Dataset, SourceFit, TrainConfig,
};
use rtl_core::evaluation::{desk_network, desk_training};
use rtl_core::linalg::{dot, least_squares, Matrix, SolveOptions};
use rtl_core::repnet::{forward, NetworkConfig, NetworkParams};
use rtl_core::simgen::{generate_domain, make_design, DesignDims, DesignFamily};

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Least squares of `y` on `[x, r]` through nalgebra's SVD pseudo-inverse.
fn pinv_oracle(x: &Matrix, r: &Matrix, y: &[f64]) -> Vec<f64> {
    let design = x.hcat(r).unwrap();
    let d = DMatrix::from_row_slice(design.rows(), design.cols(), design.as_slice());
    let c = d.pseudo_inverse(1e-12).unwrap() * DVector::from_column_slice(y);
    c.iter().copied().collect()
}

fn random_net(q: usize, p: usize, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = rtl_core::repnet::init_params(&NetworkConfig::new(q, p, 2, 16, seed)).unwrap();
    let flat: Vec<f64> = base.flatten().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    base.with_flat(&flat).unwrap()
}

fn target_data(rep: &NetworkParams, n: usize, d: usize, noise: f64, seed: u64) -> (Dataset, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = rep.input_dim();
    let x = uniform(&mut rng, n, d);
    let z = uniform(&mut rng, n, q);
    let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let gamma: Vec<f64> = (0..rep.output_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let r = forward(rep, &z).unwrap();
    let y = (0..n)
        .map(|i| dot(x.row(i), &beta) + dot(r.row(i), &gamma) + noise * rng.random_range(-1.0..1.0))
        .collect();
    (Dataset::new(y, x, z, "target").unwrap(), beta, gamma)
}

#[test]
fn domain_solve_matches_pseudo_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = uniform(&mut rng, 20, 3);
    let r = uniform(&mut rng, 20, 2);
    let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ds = Dataset::new(y.clone(), x.clone(), Matrix::zeros(20, 1), "d").unwrap();
    let (b, g) = solve_domain_linear(&ds, &r, &SolveOptions::strict()).unwrap();
    let oracle = pinv_oracle(&x, &r, &y);
    for (a, o) in b.iter().chain(&g).zip(&oracle) {
        assert!((a - o).abs() <= 1e-8, "{a} vs {o}");
    }
}

#[test]
fn fit_target_recovers_noiseless_coefficients_and_matches_oracle() {
    let rep = random_net(4, 5, 9);
    let (ds, beta, gamma) = target_data(&rep, 50, 5, 0.0, 1);
    let fit = fit_target(&ds, &rep, &SolveOptions::strict()).unwrap();
    for (a, b) in fit.beta0.iter().chain(&fit.gamma0).zip(beta.iter().chain(&gamma)) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }

    let (noisy, _, _) = target_data(&rep, 50, 5, 0.5, 2);
    let fit = fit_target(&noisy, &rep, &SolveOptions::strict()).unwrap();
    let oracle = pinv_oracle(&noisy.x, &fit.rep_values, &noisy.y);
    for (a, o) in fit.beta0.iter().chain(&fit.gamma0).zip(&oracle) {
        assert!((a - o).abs() <= 1e-8, "{a} vs {o}");
    }
    let scale = noisy.y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let design = noisy.x.hcat(&fit.rep_values).unwrap();
    for v in design.t_mul_vec(&fit.residuals).unwrap() {
        assert!(v.abs() <= 1e-6 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fit_target_is_invariant_to_output_reparameterization(seed in any::<u64>()) {
        let rep = random_net(3, 3, seed);
        let (ds, _, _) = target_data(&rep, 40, 2, 0.3, seed ^ 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 11);
        // Diagonally dominant, hence invertible and well conditioned.
        let mut lambda = uniform(&mut rng, 3, 3);
        for j in 0..3 {
            lambda[(j, j)] += 4.0;
        }
        let lambda_inv = rtl_core::linalg::solve_spd(
            &lambda.t_matmul(&lambda).unwrap(),
            &lambda.transpose(),
            &SolveOptions::strict(),
        ).unwrap();
        let reparam = rep.with_output_transform(&lambda_inv).unwrap();
        let opts = SolveOptions::strict();
        let a = fit_target(&ds, &rep, &opts).unwrap();
        let b = fit_target(&ds, &reparam, &opts).unwrap();
        for (x, y) in a.beta0.iter().zip(&b.beta0) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
        let expected = lambda.t_mul_vec(&a.gamma0).unwrap();
        for (x, y) in expected.iter().zip(&b.gamma0) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn alignment_recovers_a_known_map(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = uniform(&mut rng, 60, 3);
        let mut lambda0 = uniform(&mut rng, 3, 3);
        for j in 0..3 {
            lambda0[(j, j)] += 4.0;
        }
        // learned = truth·(Λ₀⁻¹)ᵀ, so Λ₀ maps learned rows back onto truth.
        let inv_t = rtl_core::linalg::solve_spd(
            &lambda0.matmul_t(&lambda0).unwrap(),
            &lambda0,
            &SolveOptions::strict(),
        ).unwrap();
        let learned = truth.matmul(&inv_t).unwrap();
        let a = align_representation(&learned, &truth, &SolveOptions::strict()).unwrap();
        prop_assert!(a.lambda.sub(&lambda0).unwrap().max_abs() <= 1e-6);
        prop_assert!(a.rel_error <= 1e-8);
    }
}

fn toy_sources(k: usize, n: usize, noise: f64, seed: u64) -> Vec<Dataset> {
    let dims = DesignDims {
        d: 1,
        q: 2,
        r_true: 2,
        noise_sd: noise,
    };
    let design = make_design(DesignFamily::Additive, dims, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|j| {
            let beta = [rng.random_range(-1.0..1.0)];
            let gamma = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            generate_domain(&design, &beta, &gamma, n, seed + j as u64, format!("s{j}")).unwrap()
        })
        .collect()
}

#[test]
fn noiseless_additive_source_trains_below_threshold() {
    let sources = toy_sources(1, 2000, 0.0, 1);
    let train = TrainConfig {
        epochs: 400,
        patience: 400,
        ..desk_training()
    };
    let fit = fit_sources(&sources, &desk_network(2, 2), &train).unwrap();
    let last = fit.train_history.last().unwrap();
    assert_eq!(last.epoch, 400);
    assert!(last.train_loss <= 1e-2, "final train loss {}", last.train_loss);
}

#[test]
fn early_stopping_contract_and_determinism() {
    let sources = toy_sources(3, 200, 0.3, 2);
    let train = TrainConfig {
        epochs: 150,
        patience: 10,
        ..desk_training()
    };
    let net = desk_network(2, 2);
    let fit: SourceFit = fit_sources(&sources, &net, &train).unwrap();
    assert!(fit.stopped_epoch <= train.epochs);
    let first = fit.train_history.first().unwrap().val_loss;
    assert!(fit.best_val_loss() <= first);
    let min = fit.train_history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(fit.best_val_loss(), min);
    assert_eq!(fit, fit_sources(&sources, &net, &train).unwrap());
}

#[test]
fn constant_representation_reduces_to_linear_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 80;
    let x = uniform(&mut rng, n, 2);
    let y: Vec<f64> = (0..n)
        .map(|i| 1.5 * x[(i, 0)] - 0.5 * x[(i, 1)] + 0.7 + 0.1 * rng.random_range(-1.0..1.0))
        .collect();
    let z = Matrix::from_fn(n, 1, |_, _| 1.0);
    let ds = Dataset::new(y.clone(), x.clone(), z, "one").unwrap();
    let train = TrainConfig {
        epochs: 20,
        ..desk_training()
    };
    let net = NetworkConfig::new(1, 1, 1, 4, 3);
    let fit = fit_sources_with_validation(&[ds.clone()], &[ds], &net, &train).unwrap();
    let ones = Matrix::from_fn(n, 1, |_, _| 1.0);
    let plain = least_squares(&x.hcat(&ones).unwrap(), &y, &SolveOptions::strict()).unwrap();
    for (a, b) in fit.betas[0].iter().zip(&plain) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}
