//! Solvers against nalgebra and the normal-equation properties.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rtl_core::linalg::{least_squares, norm2, numerical_rank, singular_values, solve_spd, Matrix, SolveOptions};

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

/// Tall design with a dominant identity block, so it is well conditioned.
fn well_conditioned(n: usize, m: usize) -> impl Strategy<Value = Matrix> {
    matrix(n, m).prop_map(move |mut d| {
        for j in 0..m {
            d[(j, j)] += 3.0;
        }
        d
    })
}

proptest! {
    #[test]
    fn residual_is_orthogonal_to_design(
        (d, y) in (3usize..8, 1usize..4).prop_flat_map(|(extra, m)| {
            (well_conditioned(m + extra, m), prop::collection::vec(-5.0f64..5.0, m + extra))
        })
    ) {
        let c = least_squares(&d, &y, &SolveOptions::strict()).unwrap();
        let fitted = d.mul_vec(&c).unwrap();
        let r: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let g = d.t_mul_vec(&r).unwrap();
        let worst = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(worst <= 1e-8 * norm2(&y).max(1e-300));
    }

    #[test]
    fn least_squares_matches_svd_pseudo_inverse(
        (d, y) in (2usize..10, 1usize..5).prop_flat_map(|(extra, m)| {
            (well_conditioned(m + extra, m), prop::collection::vec(-5.0f64..5.0, m + extra))
        })
    ) {
        let c = least_squares(&d, &y, &SolveOptions::strict()).unwrap();
        let pinv = to_na(&d).pseudo_inverse(1e-12).unwrap();
        let oracle = pinv * nalgebra::DVector::from_column_slice(&y);
        for (a, b) in c.iter().zip(oracle.iter()) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn solve_spd_recovers_right_hand_side(
        (a, b) in (1usize..6, 1usize..4).prop_flat_map(|(m, r)| (matrix(m + 2, m), matrix(m, r)))
    ) {
        let mut spd = a.gram();
        for j in 0..spd.rows() {
            spd[(j, j)] += 0.5;
        }
        let x = solve_spd(&spd, &b, &SolveOptions::strict()).unwrap();
        let back = spd.matmul(&x).unwrap();
        let err = back.sub(&b).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-8 * b.frobenius_norm().max(1e-300));
    }

    #[test]
    fn ridge_shrinks_rank_deficient_solutions(
        (d, y) in (4usize..9).prop_flat_map(|n| (matrix(n, 2), prop::collection::vec(-3.0f64..3.0, n)))
    ) {
        // Duplicate the first column so the design has rank at most 2 of 3.
        let dup = Matrix::from_fn(d.rows(), 3, |i, j| if j == 2 { d[(i, 0)] } else { d[(i, j)] });
        let small = least_squares(&dup, &y, &SolveOptions::with_ridge(1e-3)).unwrap();
        let large = least_squares(&dup, &y, &SolveOptions::with_ridge(1e-1)).unwrap();
        prop_assume!(norm2(&small) > 1e-6);
        prop_assert!(norm2(&large) < norm2(&small));
    }

    #[test]
    fn singular_values_match_nalgebra(a in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))) {
        let ours = singular_values(&a);
        let mut theirs: Vec<f64> = to_na(&a).singular_values().iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        prop_assert_eq!(ours.len(), theirs.len());
        for (x, y) in ours.iter().zip(&theirs) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y));
        }
    }
}

#[test]
fn rank_of_outer_product_is_one() {
    let u = [1.0, -2.0, 0.5];
    let v = [3.0, 1.0];
    let a = Matrix::from_fn(3, 2, |i, j| u[i] * v[j]);
    assert_eq!(numerical_rank(&a, 1e-10).0, 1);
}
