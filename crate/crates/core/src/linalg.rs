//! Dense row-major linear algebra: products, Cholesky solves, ridge-stabilized
//! least squares and a one-sided Jacobi singular value routine.
//!
//! Problem sizes in this crate are a few thousand rows by a few dozen columns,
//! so everything goes through the normal equations.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RtlError};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(RtlError::mismatch("matrix data", rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Single-column matrix.
    pub fn column_vector(v: &[f64]) -> Self {
        Matrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        Matrix::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    /// `[self, other]` column-wise.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(RtlError::mismatch("hcat rows", self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Stacks matrices vertically.
    pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            if b.cols != cols {
                return Err(RtlError::mismatch("vstack cols", cols, b.cols));
            }
            data.extend_from_slice(&b.data);
            rows += b.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(RtlError::mismatch(
                "matrix subtraction",
                self.data.len(),
                other.data.len(),
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out)?;
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(1.0, self, false, other, true, 0.0, &mut out)?;
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.cols, other.cols);
        gemm(1.0, self, true, other, false, 0.0, &mut out)?;
        Ok(out)
    }

    /// `selfᵀ · self`, exactly symmetric.
    pub fn gram(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.cols);
        gemm(1.0, self, true, self, false, 0.0, &mut out).expect("conformable");
        let m = self.cols;
        for i in 0..m {
            for j in 0..i {
                let v = 0.5 * (out.data[i * m + j] + out.data[j * m + i]);
                out.data[i * m + j] = v;
                out.data[j * m + i] = v;
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(RtlError::mismatch("mul_vec", self.cols, v.len()));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ · v`.
    pub fn t_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.rows != v.len() {
            return Err(RtlError::mismatch("t_mul_vec", self.rows, v.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        Ok(out)
    }

    /// Largest `|a_ij − a_ji|` relative to the largest entry.
    pub fn relative_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `c ← alpha · op(a) · op(b) + beta · c`, where `op` optionally transposes.
pub fn gemm(
    alpha: f64,
    a: &Matrix,
    transpose_a: bool,
    b: &Matrix,
    transpose_b: bool,
    beta: f64,
    c: &mut Matrix,
) -> Result<()> {
    let (m, k, rsa, csa) = if transpose_a {
        (a.cols, a.rows, 1, a.cols as isize)
    } else {
        (a.rows, a.cols, a.cols as isize, 1)
    };
    let (kb, n, rsb, csb) = if transpose_b {
        (b.cols, b.rows, 1, b.cols as isize)
    } else {
        (b.rows, b.cols, b.cols as isize, 1)
    };
    if k != kb {
        return Err(RtlError::mismatch("gemm inner dimension", k, kb));
    }
    if c.rows != m || c.cols != n {
        return Err(RtlError::mismatch("gemm output", m * n, c.rows * c.cols));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        c.data.iter_mut().for_each(|v| *v *= beta);
        return Ok(());
    }
    // SAFETY: the shapes and strides above describe exactly the row-major
    // buffers of `a`, `b` and `c`, which outlive the call; `c` is uniquely
    // borrowed and does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorize without reassociation.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// `y += alpha · x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Options shared by the linear solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Added to the diagonal of the normal matrix.
    pub ridge: f64,
    /// Relative pivot threshold below which a factorization is declared singular.
    pub tolerance: f64,
    /// When `ridge` is zero and the plain factorization fails, retry once with
    /// `1e-8 · trace / m` on the diagonal.
    #[serde(default = "default_true")]
    pub auto_ridge: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            ridge: 0.0,
            tolerance: 1e-12,
            auto_ridge: true,
        }
    }
}

impl SolveOptions {
    /// No ridge, no fallback: singular systems surface as errors.
    pub fn strict() -> Self {
        SolveOptions {
            auto_ridge: false,
            ..SolveOptions::default()
        }
    }

    pub fn with_ridge(ridge: f64) -> Self {
        SolveOptions {
            ridge,
            ..SolveOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(RtlError::InvalidConfig(alloc::format!(
                "ridge must be finite and nonnegative, got {}",
                self.ridge
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(RtlError::InvalidConfig(alloc::format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factors `a + ridge·I`. Fails when a pivot drops below
    /// `tolerance · max diag`.
    pub fn new(a: &Matrix, ridge: f64, tolerance: f64) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(RtlError::mismatch("cholesky square", n, a.cols()));
        }
        let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)] + ridge));
        if !(max_diag > 0.0) || !max_diag.is_finite() {
            return Err(RtlError::SingularSystem(alloc::format!(
                "normal matrix has no positive diagonal (max {max_diag})"
            )));
        }
        let threshold = tolerance * max_diag;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let mut d = a[(j, j)] + ridge - dot(lj, lj);
            if !(d > threshold) {
                return Err(RtlError::SingularSystem(alloc::format!(
                    "pivot {j} is {d:e}, below threshold {threshold:e}"
                )));
            }
            d = libm::sqrt(d);
            l.data[j * n + j] = d;
            for i in j + 1..n {
                let (head, tail) = l.data.split_at_mut(i * n);
                let lj = &head[j * n..j * n + j];
                let li = &tail[..j];
                let v = (a[(i, j)] - dot(li, lj)) / d;
                tail[j] = v;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// The lower-triangular factor `L`.
    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    /// `L⁻¹` by forward substitution.
    pub fn lower_inverse(&self) -> Matrix {
        let n = self.dim();
        let l = &self.l;
        let mut inv = Matrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in j..i {
                    s -= l[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = s / l[(i, i)];
            }
        }
        inv
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        let l = &self.l;
        for i in 0..n {
            let s = dot(&l.row(i)[..i], &b[..i]);
            b[i] = (b[i] - s) / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[(k, i)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        let n = self.dim();
        let mut out = Matrix::zeros(n, b.cols());
        let mut col = vec![0.0; n];
        for j in 0..b.cols() {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            self.solve_in_place(&mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }

    /// Inverse of the factored matrix.
    pub fn inverse(&self) -> Matrix {
        self.solve_matrix(&Matrix::identity(self.dim()))
    }
}

/// Factors a symmetric positive semidefinite normal matrix, applying the
/// automatic ridge fallback allowed by `opts`.
pub fn factor_normal(a: &Matrix, opts: &SolveOptions) -> Result<Cholesky> {
    opts.validate()?;
    match Cholesky::new(a, opts.ridge, opts.tolerance) {
        Ok(c) => Ok(c),
        Err(err) if opts.auto_ridge && opts.ridge == 0.0 => {
            let m = a.rows().max(1) as f64;
            let ridge = 1e-8 * a.trace() / m;
            if ridge > 0.0 && ridge.is_finite() {
                Cholesky::new(a, ridge, opts.tolerance)
            } else {
                Err(err)
            }
        }
        Err(err) => Err(err),
    }
}

/// `argmin_c ‖response − design·c‖² + ridge‖c‖²` via the normal equations.
pub fn least_squares(design: &Matrix, response: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
    if design.rows() != response.len() {
        return Err(RtlError::mismatch(
            "least_squares rows",
            design.rows(),
            response.len(),
        ));
    }
    if design.rows() == 0 || design.cols() == 0 {
        return Err(RtlError::mismatch("least_squares nonempty design", 1, 0));
    }
    if !design.is_finite() || response.iter().any(|v| !v.is_finite()) {
        return Err(RtlError::NonFinite("least_squares input".into()));
    }
    let gram = design.gram();
    let rhs = design.t_mul_vec(response)?;
    let chol = factor_normal(&gram, opts)?;
    Ok(chol.solve_vec(&rhs))
}

/// Solves `(a + ridge·I) X = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &Matrix, b: &Matrix, opts: &SolveOptions) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(RtlError::mismatch("solve_spd square", a.rows(), a.cols()));
    }
    if b.rows() != a.rows() {
        return Err(RtlError::mismatch("solve_spd rhs rows", a.rows(), b.rows()));
    }
    let asym = a.relative_asymmetry();
    if asym > 1e-9 {
        return Err(RtlError::NotSymmetric(asym));
    }
    let chol = factor_normal(a, opts)?;
    Ok(chol.solve_matrix(b))
}

/// Singular values in descending order (one-sided Jacobi).
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    // Work on the orientation with fewer columns.
    let mut w = if a.cols() > a.rows() {
        a.clone()
    } else {
        a.transpose()
    };
    // Rows of `w` are the columns being orthogonalized.
    let k = w.rows();
    let n = w.cols();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let (alpha, beta, gamma) = {
                    let wp = w.row(p);
                    let wq = w.row(q);
                    (dot(wp, wp), dot(wq, wq), dot(wp, wq))
                };
                if gamma.abs() <= 1e-15 * libm::sqrt(alpha * beta) || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for j in 0..n {
                    let xp = w[(p, j)];
                    let xq = w[(q, j)];
                    w[(p, j)] = c * xp - s * xq;
                    w[(q, j)] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..k).map(|i| norm2(w.row(i))).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(core::cmp::Ordering::Equal));
    sv
}

/// Count of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> (usize, Vec<f64>) {
    let sv = singular_values(a);
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = if smax > 0.0 {
        sv.iter().filter(|&&s| s > rel_tol * smax).count()
    } else {
        0
    };
    (rank, sv)
}
