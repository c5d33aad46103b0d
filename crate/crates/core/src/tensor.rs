//! Dense row-major matrices and the handful of linear-algebra kernels the
//! conceptor pipeline needs.
//!
//! Factorizations (Cholesky, SVD, symmetric eigendecomposition, LU) are
//! delegated to `faer`; everything else is plain loops over a
//! row-major `Vec<f64>`.

use std::fmt;
use std::ops::{Add, Sub};

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Absolute tolerance (scaled by the largest entry when that exceeds one)
/// used when checking symmetry of inputs.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Relative cutoff below which singular values are treated as zero by
/// [`pseudo_inverse`].
pub const PINV_RCOND: f64 = 1e-10;

/// A dense `rows × cols` matrix of finite `f64` values stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from a slice of equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::dims(format!(
                    "row {i} has {} values, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Matrix::new(rows.len(), cols, data)
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

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Matrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 })
    }

    /// A single-column matrix.
    pub fn column_vector(values: &[f64]) -> Self {
        Matrix::from_vec_unchecked(values.len(), 1, values.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::dims(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix::from_vec_unchecked(self.rows, rhs.cols, out))
    }

    /// `self · v` for a vector `v` of length `cols`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::dims(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Sum of each row, i.e. `self · 1`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Sum of each column, i.e. `selfᵀ · 1`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Multiplies column `j` by `factors[j]`, i.e. `self · diag(factors)`.
    pub fn scale_columns(&self, factors: &[f64]) -> Result<Matrix> {
        if factors.len() != self.cols {
            return Err(Error::dims(format!(
                "{} column factors for a matrix with {} columns",
                factors.len(),
                self.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j) * factors[j]
        }))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Matrix) -> Option<f64> {
        if self.shape() != other.shape() {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())),
        )
    }

    /// Largest `|a_ij - a_ji|`; infinite for non-square matrices.
    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_asymmetry() <= tol * self.max_abs().max(1.0)
    }

    pub(crate) fn ensure_symmetric(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::dims(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !self.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::NotSymmetric {
                asymmetry: self.max_asymmetry(),
            });
        }
        Ok(())
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self.get(i, j) + self.get(j, i))
        })
    }

    pub(crate) fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Matrix {
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

fn zip_with(a: &Matrix, b: &Matrix, op: impl Fn(f64, f64) -> f64, name: &str) -> Matrix {
    assert_eq!(
        a.shape(),
        b.shape(),
        "matrix {name} requires equal shapes"
    );
    Matrix::from_vec_unchecked(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(x, y)| op(*x, *y)).collect(),
    )
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        zip_with(self, rhs, |x, y| x + y, "addition")
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        zip_with(self, rhs, |x, y| x - y, "subtraction")
    }
}

/// Column-averaged correlation `(1/K)·Z·Zᵀ` of an `M×K` matrix.
pub fn correlation(z: &Matrix) -> Result<Matrix> {
    let (m, k) = z.shape();
    if k == 0 || m == 0 {
        return Err(Error::dims("correlation of an empty matrix"));
    }
    let inv_k = 1.0 / k as f64;
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let dot: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| a * b).sum();
            let v = dot * inv_k;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

/// `R·(R + α⁻²I)⁻¹` for symmetric positive semidefinite `R`.
///
/// Solves against a Cholesky factor of `R + α⁻²I` instead of forming the
/// inverse. Since `R` and `R + α⁻²I` commute, the product is symmetric; the
/// returned matrix is explicitly symmetrized.
pub fn ridge_inverse_apply(r: &Matrix, alpha: f64) -> Result<Matrix> {
    r.ensure_symmetric()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "aperture must be positive and finite, got {alpha}"
        )));
    }
    let reg = alpha.powi(-2);
    let n = r.rows();
    let mut a = r.to_faer();
    for i in 0..n {
        a[(i, i)] += reg;
    }
    let chol = a
        .llt(Side::Lower)
        .map_err(|_| Error::Factorization("R + α⁻²I is not positive definite".to_string()))?;
    // A X = R  =>  X = A⁻¹R, and R A⁻¹ = Xᵀ.
    let x = chol.solve(r.to_faer());
    let out = Matrix::from_faer(x.transpose()).symmetrized();
    check_finite(out)
}

fn thin_svd(a: &Matrix) -> Result<faer::linalg::solvers::Svd<f64>> {
    a.to_faer()
        .thin_svd()
        .map_err(|e| Error::Factorization(format!("SVD did not converge: {e:?}")))
}

/// Moore-Penrose pseudo-inverse via SVD, truncating singular values below
/// [`PINV_RCOND`] times the largest one.
pub fn pseudo_inverse(a: &Matrix) -> Result<Matrix> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(Matrix::zeros(n, m));
    }
    let svd = thin_svd(a)?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let cutoff = PINV_RCOND * s[0];
    let mut out = Matrix::zeros(n, m);
    for idx in 0..s.nrows() {
        let sigma = s[idx];
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        let inv = 1.0 / sigma;
        // A⁺ = Σ v_idx · u_idxᵀ / σ_idx
        for i in 0..n {
            let vi = v[(i, idx)] * inv;
            for j in 0..m {
                out.data[i * m + j] += vi * u[(j, idx)];
            }
        }
    }
    check_finite(out)
}

/// Eigenvalues of a symmetric matrix in nondecreasing order.
pub fn sym_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    a.ensure_symmetric()?;
    if a.rows() == 0 {
        return Ok(Vec::new());
    }
    a.symmetrized()
        .to_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Factorization(format!("eigensolver did not converge: {e:?}")))
}

/// Singular values in nonincreasing order.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(Vec::new());
    }
    a.to_faer()
        .singular_values()
        .map_err(|e| Error::Factorization(format!("SVD did not converge: {e:?}")))
}

/// Smallest singular value relative to the largest below which
/// [`inverse`] reports the matrix as singular.
pub const SINGULAR_RCOND: f64 = 1e-14;

/// Inverse of a square matrix by LU decomposition with partial pivoting.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::dims(format!(
            "cannot invert a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let s = singular_values(a)?;
    if s.last().is_some_and(|&min| !(min > SINGULAR_RCOND * s[0])) {
        return Err(Error::Factorization("matrix is singular".to_string()));
    }
    check_finite(Matrix::from_faer(a.to_faer().partial_piv_lu().inverse().as_ref()))
}

/// Squared Frobenius norm.
pub fn frobenius_sq(a: &Matrix) -> f64 {
    a.as_slice().iter().map(|v| v * v).sum()
}

fn check_finite(m: Matrix) -> Result<Matrix> {
    match m.as_slice().iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(m),
    }
}
