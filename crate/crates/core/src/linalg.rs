//! Dense complex matrix helpers built on `nalgebra`.

use std::ops::{Add, AddAssign, Mul, Sub};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::{Error, Result};

#[allow(non_camel_case_types)]
pub type c64 = Complex64;

pub type CMatrix = DMatrix<c64>;
pub type CVector = DVector<c64>;

/// Condition-number estimate above which a matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Dense square complex Hermitian matrix.
///
/// Every constructor mirrors the upper triangle onto the lower one and drops
/// the imaginary part of the diagonal, so `self[(m, p)] == conj(self[(p, m)])`
/// holds bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Self {
        HermitianMatrix(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        HermitianMatrix(CMatrix::from_diagonal_element(dim, dim, c64::new(scale, 0.0)))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = c64::new(d, 0.0);
        }
        HermitianMatrix(m)
    }

    /// Builds the matrix from a function evaluated on the upper triangle
    /// (`row <= col`).
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> c64) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        for col in 0..dim {
            for row in 0..=col {
                m[(row, col)] = f(row, col);
            }
        }
        let mut h = HermitianMatrix(m);
        h.mirror_upper();
        h
    }

    /// Takes the upper triangle of `m` as authoritative.
    pub fn from_upper(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let mut h = HermitianMatrix(m);
        h.mirror_upper();
        Ok(h)
    }

    /// Hermitian part `(m + m^H) / 2`.
    pub fn hermitian_part(m: &CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let sum = (m + m.adjoint()) * c64::new(0.5, 0.0);
        Self::from_upper(sum)
    }

    /// Outer product `y y^H`.
    pub fn outer(y: &CVector) -> Self {
        Self::from_upper_fn(y.len(), |r, c| y[r] * y[c].conj())
    }

    fn mirror_upper(&mut self) {
        let n = self.0.nrows();
        for col in 0..n {
            let d = self.0[(col, col)].re;
            self.0[(col, col)] = c64::new(d, 0.0);
            for row in 0..col {
                let v = self.0[(row, col)];
                self.0[(col, row)] = v.conj();
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> c64 {
        self.0[(row, col)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    /// Diagonal matrix holding the main diagonal of `self`.
    pub fn diagonal_part(&self) -> Self {
        Self::from_real_diagonal(&self.diagonal())
    }

    /// Copy of `self` with the diagonal set to zero.
    pub fn off_diagonal_part(&self) -> Self {
        let mut m = self.0.clone();
        for i in 0..self.dim() {
            m[(i, i)] = c64::new(0.0, 0.0);
        }
        HermitianMatrix(m)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn add_to_diagonal(&mut self, value: f64) {
        for i in 0..self.dim() {
            self.0[(i, i)].re += value;
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        HermitianMatrix(&self.0 * c64::new(factor, 0.0))
    }

    /// Eigenvalues in ascending order together with matching eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, CMatrix) {
        let eig = self.0.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Smallest eigenvalue divided by the largest absolute eigenvalue.
    pub fn relative_min_eigenvalue(&self) -> f64 {
        let ev = self.eigenvalues();
        let scale = ev.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if scale == 0.0 {
            0.0
        } else {
            ev[0] / scale
        }
    }

    /// Cholesky factorization with a condition-number guard.
    pub fn cholesky(&self) -> Result<HermitianCholesky> {
        HermitianCholesky::new(self)
    }

    pub fn is_hermitian_exact(&self) -> bool {
        let n = self.dim();
        (0..n).all(|c| (0..=c).all(|r| self.0[(r, c)] == self.0[(c, r)].conj()))
    }
}

impl Add<&HermitianMatrix> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(&self.0 + &rhs.0)
    }
}

impl Sub<&HermitianMatrix> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(&self.0 - &rhs.0)
    }
}

impl AddAssign<&HermitianMatrix> for HermitianMatrix {
    fn add_assign(&mut self, rhs: &HermitianMatrix) {
        self.0 += &rhs.0;
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, rhs: f64) -> HermitianMatrix {
        self.scale(rhs)
    }
}

/// Cholesky factor of a Hermitian positive-definite matrix.
pub struct HermitianCholesky {
    chol: Cholesky<c64, Dyn>,
    condition: f64,
}

impl HermitianCholesky {
    fn new(m: &HermitianMatrix) -> Result<Self> {
        let chol = m.0.clone().cholesky().ok_or(Error::Singular {
            condition: f64::INFINITY,
            context: "Cholesky factorization failed (matrix not positive definite)".into(),
        })?;
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..l.nrows() {
            let d = l[(i, i)].re;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        // (max l_ii / min l_ii)^2 is a lower bound on the 2-norm condition number.
        let condition = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
        if !(condition <= SINGULAR_CONDITION) {
            return Err(Error::Singular {
                condition,
                context: "Cholesky pivots indicate a numerically singular matrix".into(),
            });
        }
        Ok(HermitianCholesky { chol, condition })
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &CVector) -> CVector {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> HermitianMatrix {
        let inv = self.chol.inverse();
        HermitianMatrix::from_upper(inv).expect("square")
    }
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> c64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = c64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `tr(A^H B)`, the Frobenius inner product.
pub fn trace_adjoint_product(a: &CMatrix, b: &CMatrix) -> c64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Relative Frobenius distance `||a - b|| / ||b||`.
pub fn relative_frobenius_error(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = (a - b).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let base = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}
