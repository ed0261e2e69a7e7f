//! Dense decompositions on `nalgebra` matrices, computed with `faer`.
//!
//! nalgebra 0.35's dynamically sized SVD loses accuracy on rank-deficient
//! inputs (reconstruction errors near 1e-3 on exact rank-2 3x3 matrices),
//! which the rank-deficient multiview matrices hit constantly.

use std::sync::Once;

use faer::{Mat, MatRef, Side};
use nalgebra::{DMatrix, DVector};

static SEQUENTIAL: Once = Once::new();

fn init() {
    // Sequential kernels keep results bit-identical across runs and thread counts.
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

fn from_faer(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Thin SVD `m = U diag(s) V^T` with `s` in nonincreasing order.
pub fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    init();
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return (
            DMatrix::zeros(m.nrows(), 0),
            DVector::zeros(0),
            DMatrix::zeros(0, m.ncols()),
        );
    }
    let svd = to_faer(m).thin_svd().expect("SVD did not converge");
    let s = svd.S().column_vector();
    let singular = DVector::from_fn(k, |i, _| s[i]);
    (from_faer(svd.U()), singular, from_faer(svd.V()).transpose())
}

/// Full SVD; `V^T` is square even when `m` has fewer rows than columns.
pub fn full_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    init();
    let svd = to_faer(m).svd().expect("SVD did not converge");
    let k = m.nrows().min(m.ncols());
    let s = svd.S().column_vector();
    let singular = DVector::from_fn(k, |i, _| s[i]);
    (from_faer(svd.U()), singular, from_faer(svd.V()).transpose())
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    init();
    if m.is_empty() {
        return Vec::new();
    }
    to_faer(m).singular_values().expect("SVD did not converge")
}

/// Eigenvalues (nondecreasing) and eigenvectors of the symmetric part of `m`.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    init();
    let sym = (m + m.transpose()) * 0.5;
    let evd = to_faer(&sym)
        .self_adjoint_eigen(Side::Lower)
        .expect("eigendecomposition did not converge");
    let s = evd.S().column_vector();
    let values = DVector::from_fn(m.nrows(), |i, _| s[i]);
    (values, from_faer(evd.U()))
}

/// Minimum-norm least-squares solution of `a x = b` via the pseudo-inverse,
/// dropping singular values below `rcond * sigma_1`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> DVector<f64> {
    let (u, s, v_t) = thin_svd(a);
    let top = s.iter().copied().fold(0.0, f64::max);
    let utb = u.transpose() * b;
    let mut coeffs = DVector::zeros(s.len());
    for k in 0..s.len() {
        if s[k] > rcond * top && s[k] > 0.0 {
            coeffs[k] = utb[k] / s[k];
        }
    }
    v_t.transpose() * coeffs
}
