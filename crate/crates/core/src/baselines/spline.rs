//! Additive cubic B-spline features on `[−1, 1]^q` with equally spaced
//! interior knots and clamped boundary knots.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RtlError};
use crate::linalg::Matrix;

pub const SPLINE_DEGREE: usize = 3;
const LOWER: f64 = -1.0;
const UPPER: f64 = 1.0;

/// Interior knots per coordinate for cubic B-splines on `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    pub knots: Vec<Vec<f64>>,
    pub degree: usize,
}

impl SplineBasis {
    /// `interior` equally spaced interior knots on each of `q` coordinates.
    pub fn uniform(q: usize, interior: usize) -> Self {
        let step = (UPPER - LOWER) / (interior + 1) as f64;
        let knots: Vec<f64> = (1..=interior).map(|i| LOWER + step * i as f64).collect();
        SplineBasis {
            knots: vec![knots; q],
            degree: SPLINE_DEGREE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree != SPLINE_DEGREE {
            return Err(RtlError::InvalidConfig(alloc::format!(
                "spline degree must be {SPLINE_DEGREE}, got {}",
                self.degree
            )));
        }
        for k in &self.knots {
            let inside = k.iter().all(|&t| t > LOWER && t < UPPER);
            let sorted = k.windows(2).all(|w| w[0] < w[1]);
            if !inside || !sorted {
                return Err(RtlError::InvalidConfig(
                    "spline knots must be strictly increasing inside (-1, 1)".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.knots.len()
    }

    /// Basis functions on coordinate `j`.
    pub fn coordinate_size(&self, j: usize) -> usize {
        self.knots[j].len() + SPLINE_DEGREE + 1
    }

    /// Length of [`eval`](Self::eval).
    pub fn len(&self) -> usize {
        (0..self.q()).map(|j| self.coordinate_size(j)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenated per-coordinate basis values; each block sums to one.
    /// Inputs outside `[−1, 1]` are clamped to the boundary.
    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.q() {
            return Err(RtlError::mismatch("spline input dim", self.q(), z.len()));
        }
        let mut out = Vec::with_capacity(self.len());
        for (j, &zj) in z.iter().enumerate() {
            if !zj.is_finite() {
                return Err(RtlError::NonFinite("spline input".into()));
            }
            let t = clamped_knots(&self.knots[j]);
            out.extend(coordinate_basis(&t, zj.clamp(LOWER, UPPER)));
        }
        Ok(out)
    }

    /// Regression features: an intercept column followed by every
    /// coordinate's basis without its first function, which the intercept
    /// makes redundant.
    pub fn design(&self, z: &Matrix) -> Result<Matrix> {
        let cols = 1 + self.len() - self.q();
        let mut out = Matrix::zeros(z.rows(), cols);
        for i in 0..z.rows() {
            let b = self.eval(z.row(i))?;
            let row = out.row_mut(i);
            row[0] = 1.0;
            let mut c = 1;
            let mut start = 0;
            for j in 0..self.q() {
                let m = self.coordinate_size(j);
                row[c..c + m - 1].copy_from_slice(&b[start + 1..start + m]);
                c += m - 1;
                start += m;
            }
        }
        Ok(out)
    }

    /// Column count of [`design`](Self::design).
    pub fn design_width(&self) -> usize {
        1 + self.len() - self.q()
    }
}

/// Interior knots padded with `degree + 1` copies of each boundary.
fn clamped_knots(interior: &[f64]) -> Vec<f64> {
    let mut t = Vec::with_capacity(interior.len() + 2 * (SPLINE_DEGREE + 1));
    t.extend([LOWER; SPLINE_DEGREE + 1]);
    t.extend_from_slice(interior);
    t.extend([UPPER; SPLINE_DEGREE + 1]);
    t
}

/// All basis values on one coordinate via the triangular de Boor scheme.
fn coordinate_basis(t: &[f64], x: f64) -> Vec<f64> {
    let p = SPLINE_DEGREE;
    let n_basis = t.len() - p - 1;
    // Knot span: t[span] ≤ x < t[span+1], with the right endpoint folded
    // into the last nonempty span.
    let span = if x >= t[n_basis] {
        n_basis - 1
    } else {
        let mut s = p;
        while s + 1 < n_basis && t[s + 1] <= x {
            s += 1;
        }
        s
    };
    let mut n = [0.0; SPLINE_DEGREE + 1];
    let mut left = [0.0; SPLINE_DEGREE + 1];
    let mut right = [0.0; SPLINE_DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=p {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    let mut out = vec![0.0; n_basis];
    out[span - p..=span].copy_from_slice(&n);
    out
}
