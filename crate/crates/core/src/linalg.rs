//! Dense linear algebra used by the solvers and by the verification oracles.
//!
//! Matrices are row-major `f64` buffers. Vectors are plain `Vec<f64>` / `&[f64]`;
//! the free functions at the bottom of this module cover the handful of BLAS-1
//! operations the iterative methods need.
//!
//! The eigen-solver is for offline analysis only (spectra, range bases, ground
//! truth). The decentralized iterations never call it.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Default relative threshold below which an eigenvalue counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

const PIVOT_REL_TOL: f64 = 1e-14;
const SYMMETRY_TOL: f64 = 1e-12;
const SEMI_NORM_NEG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (entry ({row},{col}))")]
    NotSymmetric { row: usize, col: usize },
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is singular (pivot at index {index})")]
    Singular { index: usize },
    #[error("quadratic form {value:e} is negative: weight matrix is not positive semidefinite")]
    NotPositiveSemidefinite { value: f64 },
    #[error("eigenvalue iteration did not converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    ///
    /// Panics on ragged input; intended for literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        DenseMatrix {
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
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
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
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `out = self * x`. Panics on dimension mismatch.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "mul_vec: input length");
        assert_eq!(out.len(), self.rows, "mul_vec: output length");
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot(row, x);
        }
        if self.cols == 0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }

    pub fn try_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok(self.mul_vec(x))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul: inner dimension");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scaled(&self, factor: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * factor).collect(),
        }
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> DenseMatrix {
        assert!(self.is_square());
        let mut m = self.clone();
        for i in 0..self.rows {
            m[(i, i)] += shift;
        }
        m
    }

    /// Selects the given rows and columns.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.data)
    }

    pub fn check_symmetric(&self) -> Result<()> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let a = self[(i, j)];
                let b = self[(j, i)];
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(1.0) {
                    return Err(LinalgError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.check_symmetric().is_ok()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Cholesky factor `A = L Lᵀ`, reusable for repeated right-hand sides.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Cholesky> {
        a.check_symmetric()?;
        a.check_finite()?;
        let n = a.rows();
        let scale = (0..n).fold(0.0_f64, |m, i| m.max(a[(i, i)].abs())).max(1.0);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > PIVOT_REL_TOL * scale) {
                return Err(LinalgError::NotPositiveDefinite { index: j, pivot: diag });
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = v / ljj;
            }
        }
        Ok(Cholesky { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        let n = self.n;
        if x.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        let l = &self.lower;
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= l[i * n + k] * x[k];
            }
            x[i] = v / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v -= l[k * n + i] * x[k];
            }
            x[i] = v / l[i * n + i];
        }
        Ok(())
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Cholesky::factor(a)?.solve(b)
}

/// LU factorization with partial pivoting, for the indefinite local KKT blocks.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &DenseMatrix) -> Result<Lu> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        a.check_finite()?;
        let n = a.rows();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            if pmax <= 1e-12 * scale {
                return Err(LinalgError::Singular { index: k });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
            x[i] /= self.lu[i * n + i];
        }
        Ok(x)
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = DenseMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve(&b.column(j))?;
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

/// Summary of a symmetric spectrum with zero eigenvalues split off.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralStats {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub omega_min_nonzero: f64,
    pub omega_max: f64,
    /// `omega_max / omega_min_nonzero`; 1 for the zero matrix.
    pub kappa: f64,
    pub num_zero: usize,
    pub rank: usize,
}

impl SpectralStats {
    /// Contraction factor `(√κ − 1)/(√κ + 1)` of the CG rate estimate.
    pub fn contraction_factor(&self) -> f64 {
        contraction_factor(self.kappa)
    }
}

pub fn contraction_factor(kappa: f64) -> f64 {
    let r = kappa.sqrt();
    (r - 1.0) / (r + 1.0)
}

impl SymmetricEigen {
    /// Householder tridiagonalization followed by implicit QL.
    pub fn compute(a: &DenseMatrix) -> Result<SymmetricEigen> {
        a.check_symmetric()?;
        a.check_finite()?;
        let n = a.rows();
        if n == 0 {
            return Ok(SymmetricEigen {
                eigenvalues: Vec::new(),
                eigenvectors: DenseMatrix::zeros(0, 0),
            });
        }
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        tridiagonalize(&mut v, &mut d, &mut e, true);
        // QL rotates pairs of eigenvector columns; work on the transpose so the
        // rotated vectors are contiguous.
        let mut vt: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|k| v[k][j]).collect()).collect();
        drop(v);
        tridiagonal_ql(&mut d, &mut e, &mut vt)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| d[x].total_cmp(&d[y]));
        let eigenvalues = order.iter().map(|&k| d[k]).collect();
        let eigenvectors = DenseMatrix::from_fn(n, n, |i, j| vt[order[j]][i]);
        Ok(SymmetricEigen {
            eigenvalues,
            eigenvectors,
        })
    }

    /// Absolute threshold corresponding to a relative `zero_tol`.
    pub fn zero_threshold(&self, zero_tol: f64) -> f64 {
        let scale = self.eigenvalues.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
        zero_tol * scale
    }

    pub fn stats(&self, zero_tol: f64) -> SpectralStats {
        spectral_stats(self.eigenvalues.clone(), zero_tol)
    }

    fn columns_where(&self, keep: impl Fn(f64) -> bool) -> DenseMatrix {
        let cols: Vec<usize> = (0..self.eigenvalues.len())
            .filter(|&k| keep(self.eigenvalues[k]))
            .collect();
        let n = self.eigenvectors.rows();
        DenseMatrix::from_fn(n, cols.len(), |i, j| self.eigenvectors[(i, cols[j])])
    }

    /// Orthonormal basis of the span of eigenvectors with `|ω| > threshold`.
    pub fn range_basis(&self, zero_tol: f64) -> DenseMatrix {
        let thr = self.zero_threshold(zero_tol);
        self.columns_where(|w| w.abs() > thr)
    }

    /// Orthonormal basis of the numerical null space.
    pub fn null_basis(&self, zero_tol: f64) -> DenseMatrix {
        let thr = self.zero_threshold(zero_tol);
        self.columns_where(|w| w.abs() <= thr)
    }
}

/// Ascending eigenvalues of a symmetric matrix, without eigenvectors.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    a.check_symmetric()?;
    a.check_finite()?;
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e, false);
    drop(v);
    let mut empty = vec![Vec::new(); n];
    tridiagonal_ql(&mut d, &mut e, &mut empty)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Spectrum summary of a symmetric matrix.
pub fn symmetric_eigen(a: &DenseMatrix, zero_tol: f64) -> Result<SpectralStats> {
    Ok(spectral_stats(symmetric_eigenvalues(a)?, zero_tol))
}

/// Rank, extreme nonzero eigenvalues and condition number from an ascending
/// spectrum; `|ω| ≤ zero_tol · max|ω|` counts as zero.
pub fn spectral_stats(eigenvalues: Vec<f64>, zero_tol: f64) -> SpectralStats {
    let thr = zero_tol * eigenvalues.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    let nonzero: Vec<f64> = eigenvalues.iter().copied().filter(|w| w.abs() > thr).collect();
    let rank = nonzero.len();
    let (omega_min_nonzero, omega_max, kappa) = if rank == 0 {
        (0.0, 0.0, 1.0)
    } else {
        let lo = nonzero.iter().fold(f64::INFINITY, |m, w| m.min(w.abs()));
        let hi = nonzero.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
        (lo, hi, hi / lo)
    };
    SpectralStats {
        num_zero: eigenvalues.len() - rank,
        eigenvalues,
        omega_min_nonzero,
        omega_max,
        kappa,
        rank,
    }
}

/// Orthonormal basis `Q` of `range(S)`: `QᵀQ = I` and `S Q Qᵀ = S`.
pub fn range_basis(s: &DenseMatrix, zero_tol: f64) -> Result<DenseMatrix> {
    Ok(SymmetricEigen::compute(s)?.range_basis(zero_tol))
}

/// `√(xᵀWx)`; small negative forms from roundoff are clamped to zero.
pub fn semi_norm(w: &DenseMatrix, x: &[f64]) -> Result<f64> {
    if !w.is_square() {
        return Err(LinalgError::NotSquare {
            rows: w.rows(),
            cols: w.cols(),
        });
    }
    if x.len() != w.cols() {
        return Err(LinalgError::DimensionMismatch {
            expected: w.cols(),
            found: x.len(),
        });
    }
    let q = w.quadratic_form(x);
    // Roundoff in xᵀWx scales with ‖W‖‖x‖²; the absolute floor applies to unit scale.
    let slack = SEMI_NORM_NEG_TOL * (w.frobenius_norm() * dot(x, x)).max(1.0);
    if q < -slack {
        return Err(LinalgError::NotPositiveSemidefinite { value: q });
    }
    Ok(q.max(0.0).sqrt())
}

// Householder reduction to tridiagonal form (Bowdler, Martin, Reinsch, Wilkinson;
// EISPACK tred2). On exit `d` holds the diagonal and `e[1..]` the sub-diagonal;
// with `accumulate` `v` holds the orthogonal transform, otherwise it is scratch.
#[allow(clippy::needless_range_loop, clippy::manual_memcpy)]
fn tridiagonalize(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64], accumulate: bool) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[n - 1][j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in (j + 1)..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    if !accumulate {
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = v[j][j];
        }
        e[0] = 0.0;
        return;
    }
    for i in 0..n.saturating_sub(1) {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal matrix (EISPACK tql2). `vt[k]` is the k-th
// eigenvector; rotations are applied to pairs of rows.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], vt: &mut [Vec<f64>]) -> Result<()> {
    let n = d.len();
    const MAX_SWEEPS: usize = 60;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_SWEEPS {
                    return Err(LinalgError::NoConvergence { iterations: iter });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = vt.split_at_mut(i + 1);
                    let vi = &mut lo[i];
                    let vi1 = &mut hi[0];
                    for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                        let t = *b;
                        *b = s * *a + c * t;
                        *a = c * *a - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(LinalgError::NonFinite { index }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    // Cyclic Jacobi rotations; an independent route to the spectrum.
    fn jacobi_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
        let n = a.rows();
        let mut m = a.clone();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)] * m[(i, j)])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if m[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                }
            }
        }
        let mut w: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
        w.sort_by(f64::total_cmp);
        w
    }

    fn random_symmetric(n: usize, vals: &[f64]) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                let v = vals[k % vals.len()];
                k += 1;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn solve_spd_examples() {
        assert_eq!(
            solve_spd(&DenseMatrix::identity(2), &[3.0, 4.0]).unwrap(),
            vec![3.0, 4.0]
        );
        let a = DenseMatrix::from_rows(&[[4.0, 1.0], [1.0, 3.0]]);
        let x = solve_spd(&a, &[1.0, 2.0]).unwrap();
        assert_close(&x, &[1.0 / 11.0, 7.0 / 11.0], 1e-15);
        let singular = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(
            solve_spd(&singular, &[1.0, 0.0]),
            Err(LinalgError::NotPositiveDefinite { index: 1, .. })
        ));
    }

    #[test]
    fn solve_spd_rejects_bad_input() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(
            solve_spd(&a, &[1.0, 1.0]),
            Err(LinalgError::NotSymmetric { .. })
        ));
        let chol = Cholesky::factor(&DenseMatrix::identity(2)).unwrap();
        assert!(matches!(chol.solve(&[1.0]), Err(LinalgError::DimensionMismatch { .. })));
    }

    #[test]
    fn lu_solves_indefinite_kkt() {
        // [[2, 1], [1, 0]] is indefinite but invertible.
        let a = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 0.0]]);
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&[3.0, 1.0]).unwrap();
        assert_close(&x, &[1.0, 1.0], 1e-15);
        let singular = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(Lu::factor(&singular), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn eigen_examples() {
        let st = symmetric_eigen(&DenseMatrix::from_diagonal(&[4.0, 1.0, 0.0]), 1e-9).unwrap();
        assert_eq!(st.omega_max, 4.0);
        assert_eq!(st.omega_min_nonzero, 1.0);
        assert_eq!(st.kappa, 4.0);
        assert_eq!((st.num_zero, st.rank), (1, 2));

        let st = symmetric_eigen(&DenseMatrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]), 1e-9).unwrap();
        assert_close(&st.eigenvalues, &[0.0, 2.0], 1e-14);
        assert_eq!(st.num_zero, 1);

        let st = symmetric_eigen(&DenseMatrix::identity(3), 1e-9).unwrap();
        assert_eq!(st.kappa, 1.0);
        assert_eq!(st.num_zero, 0);
        assert_eq!(st.contraction_factor(), 0.0);
    }

    #[test]
    fn eigen_of_zero_and_tiny_matrices() {
        let st = symmetric_eigen(&DenseMatrix::zeros(3, 3), 1e-9).unwrap();
        assert_eq!((st.rank, st.num_zero, st.kappa), (0, 3, 1.0));
        let st = symmetric_eigen(&DenseMatrix::from_rows(&[[5.0]]), 1e-9).unwrap();
        assert_eq!(st.eigenvalues, vec![5.0]);
    }

    #[test]
    fn values_only_matches_full_decomposition() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 3, 7, 20] {
            let b = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            let a = b.matmul(&b.transpose());
            let full = SymmetricEigen::compute(&a).unwrap().eigenvalues;
            let values = symmetric_eigenvalues(&a).unwrap();
            for (x, y) in full.iter().zip(&values) {
                assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()), "{n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn range_basis_examples() {
        let q = range_basis(&DenseMatrix::from_diagonal(&[1.0, 0.0]), 1e-9).unwrap();
        assert_eq!((q.rows(), q.cols()), (2, 1));
        assert_close(&[q[(0, 0)].abs(), q[(1, 0)]], &[1.0, 0.0], 1e-15);

        let q = range_basis(&DenseMatrix::identity(2), 1e-9).unwrap();
        let qtq = q.transpose().matmul(&q);
        assert!(qtq.sub(&DenseMatrix::identity(2)).frobenius_norm() < 1e-14);

        let q = range_basis(&DenseMatrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]), 1e-9).unwrap();
        assert_eq!(q.cols(), 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let sign = q[(0, 0)].signum();
        assert_close(&[sign * q[(0, 0)], sign * q[(1, 0)]], &[h, -h], 1e-14);
    }

    #[test]
    fn semi_norm_examples() {
        assert_eq!(semi_norm(&DenseMatrix::identity(2), &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(
            semi_norm(&DenseMatrix::from_diagonal(&[1.0, 0.0]), &[0.0, 7.0]).unwrap(),
            0.0
        );
        let w = DenseMatrix::from_rows(&[[4.0, 1.0], [1.0, 3.0]]);
        assert!((semi_norm(&w, &[1.0, 1.0]).unwrap() - 3.0).abs() < 1e-15);
        assert!(matches!(
            semi_norm(&w, &[1.0]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            semi_norm(&DenseMatrix::from_diagonal(&[-1.0]), &[1.0]),
            Err(LinalgError::NotPositiveSemidefinite { .. })
        ));
    }

    proptest! {
        #[test]
        fn spd_solve_residual(n in 1usize..20, vals in prop::collection::vec(-1.0f64..1.0, 400), b in prop::collection::vec(-10.0f64..10.0, 20)) {
            // G Gᵀ + n I is comfortably SPD.
            let g = DenseMatrix::from_fn(n, n, |i, j| vals[i * 20 + j]);
            let a = g.matmul(&g.transpose()).shifted(n as f64);
            let b = &b[..n];
            let x = solve_spd(&a, b).unwrap();
            let r = sub(&a.mul_vec(&x), b);
            prop_assert!(norm(&r) <= 1e-9 * norm(b).max(1e-300) + 1e-14);
        }

        #[test]
        fn eigen_reconstruction(n in 1usize..16, vals in prop::collection::vec(-5.0f64..5.0, 1..200)) {
            let a = random_symmetric(n, &vals);
            let eig = SymmetricEigen::compute(&a).unwrap();
            let v = &eig.eigenvectors;
            let d = DenseMatrix::from_diagonal(&eig.eigenvalues);
            let recon = v.matmul(&d).matmul(&v.transpose());
            prop_assert!(recon.sub(&a).frobenius_norm() <= 1e-8 * a.frobenius_norm().max(1e-300));
            let vtv = v.transpose().matmul(v);
            prop_assert!(vtv.sub(&DenseMatrix::identity(n)).frobenius_norm() <= 1e-10);
            let oracle = jacobi_eigenvalues(&a);
            for (x, y) in eig.eigenvalues.iter().zip(&oracle) {
                prop_assert!((x - y).abs() <= 1e-9 * a.frobenius_norm().max(1.0));
            }
        }

        #[test]
        fn range_basis_and_null_space(n in 2usize..12, r in 1usize..6, vals in prop::collection::vec(-1.0f64..1.0, 72)) {
            // Low-rank PSD S = G Gᵀ with G n×r.
            let r = r.min(n);
            let g = DenseMatrix::from_fn(n, r, |i, j| vals[i * 6 + j]);
            let s = g.matmul(&g.transpose());
            let eig = SymmetricEigen::compute(&s).unwrap();
            let q = eig.range_basis(DEFAULT_ZERO_TOL);
            let qtq = q.transpose().matmul(&q);
            prop_assert!(qtq.sub(&DenseMatrix::identity(q.cols())).frobenius_norm() <= 1e-10);
            let sqq = s.matmul(&q).matmul(&q.transpose());
            prop_assert!(sqq.sub(&s).frobenius_norm() <= 1e-8 * s.frobenius_norm().max(1e-300));
            let nb = eig.null_basis(DEFAULT_ZERO_TOL);
            // Null vectors may carry eigenvalues up to the zero threshold.
            let cutoff = eig.zero_threshold(DEFAULT_ZERO_TOL);
            for j in 0..nb.cols() {
                prop_assert!(s.quadratic_form(&nb.column(j)) <= cutoff + 1e-15);
            }
        }
    }
}
