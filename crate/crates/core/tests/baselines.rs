//! Comparator methods: spline basis algebra, pooled and meta-analytic
//! estimators, the target-only network and the oracle.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtl_core::baselines::{
    fit_meta, fit_oracle, fit_pool, fit_stl, meta_combine, DomainEstimate, FitDetails, Method, SplineBasis,
};
use rtl_core::estimator::{fit_sources, Dataset, TargetFit};
use rtl_core::evaluation::{desk_network, desk_training, median, run_benchmark, NoClock, RowStatus, Scenario};
use rtl_core::linalg::{dot, least_squares, Matrix, SolveOptions};
use rtl_core::simgen::{
    generate_domain, make_design, true_regression, true_representation, CoefficientRegime, DesignDims, DesignFamily,
};

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn linear_domain(x: &Matrix, z: &Matrix, beta: &[f64], id: &str) -> Dataset {
    let y = (0..x.rows()).map(|i| dot(x.row(i), beta)).collect();
    Dataset::new(y, x.clone(), z.clone(), id).unwrap()
}

/// Textbook recursive Cox–de Boor evaluation of `B_{i,p}` on knot vector `t`,
/// with the last basis function closed at the right boundary.
fn cox_de_boor(t: &[f64], i: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        let last = t[i + 1] == *t.last().unwrap() && t[i] < t[i + 1];
        return if (t[i] <= x && x < t[i + 1]) || (last && x == t[i + 1]) { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    if t[i + p] > t[i] {
        v += (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x);
    }
    if t[i + p + 1] > t[i + 1] {
        v += (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x);
    }
    v
}

proptest! {
    #[test]
    fn spline_blocks_sum_to_one(
        q in 1usize..4,
        interior in 0usize..7,
        z in proptest::collection::vec(-1.5f64..1.5, 4),
    ) {
        let basis = SplineBasis::uniform(q, interior);
        let vals = basis.eval(&z[..q]).unwrap();
        let m = basis.coordinate_size(0);
        for block in vals.chunks(m) {
            let s: f64 = block.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-10, "block sum {}", s);
            prop_assert!(block.iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn meta_weights_sum_to_one(
        est in proptest::collection::vec(
            (proptest::collection::vec(-5.0f64..5.0, 3), proptest::collection::vec(1e-3f64..10.0, 3)),
            1..6,
        ),
    ) {
        let estimates: Vec<DomainEstimate> =
            est.into_iter().map(|(beta, variance)| DomainEstimate { beta, variance }).collect();
        let (beta, weights) = meta_combine(&estimates).unwrap();
        for j in 0..3 {
            let total: f64 = weights.iter().map(|w| w[j]).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            let lo = estimates.iter().map(|e| e.beta[j]).fold(f64::INFINITY, f64::min);
            let hi = estimates.iter().map(|e| e.beta[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(beta[j] >= lo - 1e-12 && beta[j] <= hi + 1e-12);
        }
    }
}

#[test]
fn spline_is_continuous_at_interior_knots() {
    let basis = SplineBasis::uniform(1, 4);
    for &knot in &basis.knots[0] {
        let left = basis.eval(&[knot - 1e-12]).unwrap();
        let at = basis.eval(&[knot]).unwrap();
        let right = basis.eval(&[knot + 1e-12]).unwrap();
        for ((l, a), r) in left.iter().zip(&at).zip(&right) {
            assert!((l - a).abs() <= 1e-10 && (r - a).abs() <= 1e-10, "{l} {a} {r} at {knot}");
        }
    }
}

#[test]
fn spline_without_interior_knots_matches_cox_de_boor() {
    let basis = SplineBasis::uniform(1, 0);
    let t = [-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];
    let vals = basis.eval(&[0.25]).unwrap();
    assert_eq!(vals.len(), 4);
    for (i, v) in vals.iter().enumerate() {
        let oracle = cox_de_boor(&t, i, 3, 0.25);
        assert!((v - oracle).abs() <= 1e-12, "basis {i}: {v} vs {oracle}");
    }
}

#[test]
fn spline_matches_cox_de_boor_with_interior_knots() {
    let basis = SplineBasis::uniform(1, 3);
    let mut t = vec![-1.0; 4];
    t.extend(&basis.knots[0]);
    t.extend([1.0; 4]);
    for x in [-1.0, -0.73, -0.5, 0.0, 0.1, 0.5, 0.99, 1.0] {
        let vals = basis.eval(&[x]).unwrap();
        for (i, v) in vals.iter().enumerate() {
            assert!((v - cox_de_boor(&t, i, 3, x)).abs() <= 1e-12, "x={x} basis {i}");
        }
    }
}

#[test]
fn pool_recovers_homogeneous_linear_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let beta = [0.7, -1.3, 2.1];
    let domains: Vec<Dataset> = (0..3)
        .map(|k| linear_domain(&uniform(&mut rng, 80, 3), &uniform(&mut rng, 80, 2), &beta, &format!("d{k}")))
        .collect();
    let val = linear_domain(&uniform(&mut rng, 30, 3), &uniform(&mut rng, 30, 2), &beta, "val");
    let grid = [0, 2, 5];
    let fit = fit_pool(&domains, &val, &grid, &SolveOptions::default()).unwrap();
    for (b, t) in fit.beta0.iter().zip(&beta) {
        assert!((b - t).abs() <= 1e-6, "{b} vs {t}");
    }
    match fit.details {
        FitDetails::Pool { interior_knots, .. } => assert!(grid.contains(&interior_knots)),
        other => panic!("unexpected details {other:?}"),
    }
}

#[test]
fn pool_averages_two_equally_sized_domains() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = uniform(&mut rng, 60, 1);
    let z = uniform(&mut rng, 60, 2);
    let domains = [linear_domain(&x, &z, &[1.0], "a"), linear_domain(&x, &z, &[3.0], "b")];
    let val = linear_domain(&uniform(&mut rng, 20, 1), &uniform(&mut rng, 20, 2), &[2.0], "val");
    let fit = fit_pool(&domains, &val, &[0, 1], &SolveOptions::default()).unwrap();
    assert!((fit.beta0[0] - 2.0).abs() <= 1e-6, "{}", fit.beta0[0]);
}

#[test]
fn pool_without_confounder_features_is_pooled_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let domains: Vec<Dataset> = (0..3)
        .map(|k| {
            let x = uniform(&mut rng, 40, 2);
            let y = (0..40).map(|i| x[(i, 0)] - 0.5 * x[(i, 1)] + 0.3 + rng.random_range(-1.0..1.0)).collect();
            Dataset::new(y, x, Matrix::zeros(40, 0), format!("d{k}")).unwrap()
        })
        .collect();
    let val = Dataset::new(vec![0.0; 5], uniform(&mut rng, 5, 2), Matrix::zeros(5, 0), "val").unwrap();
    let fit = fit_pool(&domains, &val, &[0], &SolveOptions::strict()).unwrap();

    let xs: Vec<&Matrix> = domains.iter().map(|d| &d.x).collect();
    let stacked = Matrix::vstack(&xs).unwrap();
    let design = stacked.hcat(&Matrix::from_fn(stacked.rows(), 1, |_, _| 1.0)).unwrap();
    let y: Vec<f64> = domains.iter().flat_map(|d| d.y.iter().copied()).collect();
    let ls = least_squares(&design, &y, &SolveOptions::strict()).unwrap();
    for (a, b) in fit.beta0.iter().zip(&ls) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn meta_combine_closed_forms() {
    let est = |b: f64, v: f64| DomainEstimate {
        beta: vec![b],
        variance: vec![v],
    };
    let (b, _) = meta_combine(&[est(1.0, 2.0), est(4.0, 2.0), est(7.0, 2.0)]).unwrap();
    assert!((b[0] - 4.0).abs() <= 1e-12);
    let (b, w) = meta_combine(&[est(-0.3, 0.7)]).unwrap();
    assert_eq!((b[0], w[0][0]), (-0.3, 1.0));
    let (b, _) = meta_combine(&[est(1.0, 1.0), est(3.0, 1.0 / 3.0)]).unwrap();
    assert!((b[0] - 2.5).abs() <= 1e-12, "{}", b[0]);
    assert!(meta_combine(&[est(1.0, 0.0)]).is_err());
}

#[test]
fn meta_fit_reports_normalized_weights() {
    let design = make_design(DesignFamily::Additive, dims(0.3), 3).unwrap();
    let (beta, gamma) = (vec![1.0; 5], vec![1.0; 5]);
    let domains: Vec<Dataset> = (0..4)
        .map(|k| generate_domain(&design, &beta, &gamma, 200, 100 + k, format!("d{k}")).unwrap())
        .collect();
    let fit = fit_meta(&domains[1..], &domains[0], 2, &SolveOptions::default()).unwrap();
    let FitDetails::Meta { weights, .. } = &fit.details else {
        panic!("meta details expected");
    };
    assert_eq!(weights.len(), 4);
    for j in 0..5 {
        assert!((weights.iter().map(|w| w[j]).sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

fn dims(noise: f64) -> DesignDims {
    DesignDims {
        d: 5,
        q: 10,
        r_true: 5,
        noise_sd: noise,
    }
}

#[test]
fn stl_is_the_single_domain_source_fit() {
    let design = make_design(DesignFamily::Additive, dims(0.3), 8).unwrap();
    let target = generate_domain(&design, &[1.0; 5], &[0.5; 5], 120, 9, "target").unwrap();
    let mut train = desk_training();
    train.epochs = 60;
    let net = desk_network(10, 5);
    let stl = fit_stl(&target, &net, &train).unwrap();
    let sf = fit_sources(std::slice::from_ref(&target), &net, &train).unwrap();
    assert_eq!(stl.beta0, sf.betas[0]);
    let rtl_core::baselines::RegressionSurface::Network { beta, gamma, rep } = &stl.surface else {
        panic!("network surface expected");
    };
    assert_eq!(beta, &sf.betas[0]);
    assert_eq!(gamma, &sf.gammas[0]);
    assert_eq!(rep.flatten(), sf.rep.flatten());
}

#[test]
fn stl_fits_a_large_noiseless_target() {
    let design = make_design(DesignFamily::Additive, dims(0.0), 21).unwrap();
    let mut scenario = Scenario::desk(design, CoefficientRegime::Homogeneous, 1, 10, 2000, 5, 1, 5);
    scenario.methods = vec![Method::Stl];
    let report = run_benchmark(&scenario, &NoClock).unwrap();
    let mse = report.rows[0].mse0.expect("STL succeeded");
    assert!(mse <= 0.05, "prediction MSE {mse}");
}

#[test]
fn oracle_recovers_noiseless_coefficients() {
    let design = make_design(DesignFamily::Deep, dims(0.0), 4).unwrap();
    let beta = [0.5, -1.0, 1.5, 0.2, -0.7];
    let gamma = [1.0, -0.4, 0.9, 0.3, -1.2];
    let target = generate_domain(&design, &beta, &gamma, 60, 31, "target").unwrap();
    let fit = fit_oracle(&target, &design, &SolveOptions::strict()).unwrap();
    for (b, t) in fit.beta0.iter().zip(&beta) {
        assert!((b - t).abs() <= 1e-8, "{b} vs {t}");
    }
    let truth = true_representation(&design, &target.z).unwrap();
    let direct = TargetFit::from_rep_values(&target, truth.clone(), &SolveOptions::strict()).unwrap();
    assert_eq!(fit.beta0, direct.beta0);
    for (g, t) in direct.gamma0.iter().zip(&gamma) {
        assert!((g - t).abs() <= 1e-8, "{g} vs {t}");
    }

    // Independent pseudo-inverse solve on [X, R*(Z)].
    let full = target.x.hcat(&truth).unwrap();
    let m = DMatrix::from_row_slice(full.rows(), full.cols(), full.as_slice());
    let coef = m.pseudo_inverse(1e-12).unwrap() * DVector::from_column_slice(&target.y);
    for (a, b) in fit.beta0.iter().zip(coef.iter()) {
        assert!((a - b).abs() <= 1e-8);
    }

    let test = generate_domain(&design, &beta, &gamma, 50, 32, "test").unwrap();
    let pred = fit.predict(&test.x, &test.z).unwrap();
    let mean = true_regression(&design, &beta, &gamma, &test.x, &test.z).unwrap();
    for (p, m) in pred.iter().zip(&mean) {
        assert!((p - m).abs() <= 1e-8);
    }
}

#[test]
fn target_only_network_trails_transfer_and_oracle_on_small_targets() {
    let design = make_design(DesignFamily::Deep, dims(0.3), 4).unwrap();
    let mut scenario = Scenario::desk(design, CoefficientRegime::Heterogeneous, 6, 400, 50, 5, 20, 2024);
    scenario.methods = vec![Method::Rtl, Method::Stl, Method::Oracle];
    let report = run_benchmark(&scenario, &NoClock).unwrap();
    assert!(report.rows.iter().all(|r| r.status == RowStatus::Ok));
    let errs = |m: Method| -> Vec<f64> {
        report.rows.iter().filter(|r| r.method == m).map(|r| r.err_beta.unwrap()).collect()
    };
    let (rtl, stl, oracle) = (errs(Method::Rtl), errs(Method::Stl), errs(Method::Oracle));
    let wins = stl.iter().zip(&rtl).filter(|(s, r)| s >= r).count();
    assert!(wins >= 14, "STL ≥ RTL in only {wins} of 20 replications");
    let (mo, ms) = (median(&oracle).unwrap(), median(&stl).unwrap());
    assert!(mo < ms, "oracle median {mo} vs STL median {ms}");
}
