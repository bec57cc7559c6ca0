//! Linear channel estimators `h_hat = W y` and their exact mean-squared error.

use crate::covest::Scheme;
use crate::linalg::{trace_adjoint_product, trace_of_product, CMatrix, CVector, HermitianMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    Mmse,
    ApproxMmse { eta: f64, mu: f64, scheme: Scheme },
    Ls,
}

/// Deterministic `M x M` estimation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMatrix {
    pub w: CMatrix,
    pub kind: FilterKind,
}

impl FilterMatrix {
    pub fn ls(m: usize) -> Self {
        FilterMatrix {
            w: CMatrix::identity(m, m),
            kind: FilterKind::Ls,
        }
    }

    pub fn zero(m: usize) -> Self {
        FilterMatrix {
            w: CMatrix::zeros(m, m),
            kind: FilterKind::Ls,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }
}

/// MMSE filter `R Q^-1` together with the estimate covariance `Phi = R Q^-1 R`.
#[derive(Debug, Clone)]
pub struct MmseFilter {
    pub filter: FilterMatrix,
    pub phi: HermitianMatrix,
}

/// `R Q^-1`, computed as `(Q^-1 R)^H` from a Cholesky solve.
fn right_divide(r: &HermitianMatrix, q: &HermitianMatrix) -> Result<CMatrix> {
    if r.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: r.dim(),
        });
    }
    let chol = q.cholesky()?;
    Ok(chol.solve(r.as_matrix()).adjoint())
}

pub fn mmse_filter(r: &HermitianMatrix, q: &HermitianMatrix) -> Result<MmseFilter> {
    let w = right_divide(r, q).map_err(|e| e.context("MMSE filter: Q is not invertible"))?;
    let phi = HermitianMatrix::hermitian_part(&(&w * r.as_matrix()))?;
    Ok(MmseFilter {
        filter: FilterMatrix {
            w,
            kind: FilterKind::Mmse,
        },
        phi,
    })
}

/// Bookkeeping attached to approximate-MMSE filters and their errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxMeta {
    pub eta: f64,
    pub mu: f64,
    pub scheme: Scheme,
    pub n_q: usize,
}

/// `R_hat Q_hat^-1` from estimated covariances. `R_hat` may be indefinite.
pub fn approx_mmse_filter(r_hat: &HermitianMatrix, q_hat: &HermitianMatrix, meta: ApproxMeta) -> Result<FilterMatrix> {
    let w = right_divide(r_hat, q_hat).map_err(|e| match e {
        Error::Singular { condition, context } => Error::Singular {
            condition,
            context: format!("{context}; Q_hat with eta={}, N_Q={}", meta.eta, meta.n_q),
        },
        other => other,
    })?;
    Ok(FilterMatrix {
        w,
        kind: FilterKind::ApproxMmse {
            eta: meta.eta,
            mu: meta.mu,
            scheme: meta.scheme,
        },
    })
}

pub fn estimate_channel(filter: &FilterMatrix, y: &CVector) -> CVector {
    &filter.w * y
}

/// `E||h - W y||^2 = tr((I - W - W^H) R) + tr(W Q W^H)` for a deterministic `W`.
pub fn analytic_mse(filter: &FilterMatrix, r: &HermitianMatrix, q: &HermitianMatrix) -> Result<f64> {
    let m = r.dim();
    if filter.dim() != m || q.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: filter.dim().max(q.dim()),
        });
    }
    let w = &filter.w;
    let cross = trace_of_product(w, r.as_matrix()) + trace_adjoint_product(w, r.as_matrix());
    let wq = w * q.as_matrix();
    // tr(W Q W^H) = <W, W Q> (Frobenius).
    let quad = trace_adjoint_product(w, &wq);
    let mse = r.trace() - cross + quad;
    let scale = r.trace().abs() + quad.re.abs() + cross.norm();
    debug_assert!(
        mse.im.abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE),
        "imaginary MSE residue {}",
        mse.im
    );
    Ok(mse.re.max(0.0))
}

/// Analytic MSE divided by `tr(R)`.
pub fn normalized_mse(filter: &FilterMatrix, r: &HermitianMatrix, q: &HermitianMatrix) -> Result<f64> {
    let tr = r.trace();
    if tr <= 0.0 {
        return Err(Error::InvalidCovariance("normalized MSE needs tr(R) > 0".into()));
    }
    Ok(analytic_mse(filter, r, q)? / tr)
}
