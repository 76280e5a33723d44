use nalgebra::{DMatrix, DVector};

use super::matrix::{ComplexMatrix, C64};
use super::testfn::ScalarTestFn;
use crate::error::{invalid, Error, Result};

/// Relative tolerance for treating a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Thin singular value decomposition `A = U diag(s) V*` with `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub s: Vec<f64>,
    pub v: ComplexMatrix,
}

/// Hermitian eigendecomposition `A = Q diag(w) Q*` with `w` descending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

fn check_finite(a: &ComplexMatrix) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        invalid("matrix has non-finite entries")
    }
}

/// Stable descending order; equal values keep first-occurrence order.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    idx
}

fn permute_columns(m: &DMatrix<C64>, order: &[usize]) -> DMatrix<C64> {
    DMatrix::from_fn(m.nrows(), order.len(), |i, j| m[(i, order[j])])
}

fn to_faer(a: &ComplexMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j))
}

fn from_faer(m: faer::MatRef<'_, C64>) -> DMatrix<C64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

// nalgebra's complex SVD can return factors that do not reconstruct
// rank-deficient inputs, so decompositions go through faer.
pub fn svd(a: &ComplexMatrix) -> Result<Svd> {
    check_finite(a)?;
    if a.rows() == 0 || a.cols() == 0 {
        let k = a.rows().min(a.cols());
        return Ok(Svd { u: ComplexMatrix::zeros(a.rows(), k), s: Vec::new(), v: ComplexMatrix::zeros(a.cols(), k) });
    }
    let dec = to_faer(a).thin_svd().map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let raw: Vec<f64> = dec.S().column_vector().iter().map(|z| z.re).collect();
    let order = descending_order(&raw);
    Ok(Svd {
        u: ComplexMatrix::from_dmatrix(permute_columns(&from_faer(dec.U()), &order)),
        s: order.iter().map(|&i| raw[i]).collect(),
        v: ComplexMatrix::from_dmatrix(permute_columns(&from_faer(dec.V()), &order)),
    })
}

pub fn singular_values(a: &ComplexMatrix) -> Result<Vec<f64>> {
    check_finite(a)?;
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(Vec::new());
    }
    let mut s: Vec<f64> = to_faer(a)
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?
        .into_iter()
        .collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(s)
}

/// Largest singular value.
pub fn op_norm(a: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Frobenius-norm distance from Hermitian, relative to the matrix scale.
pub fn hermitian_defect(a: &ComplexMatrix) -> f64 {
    let scale = a.frob_norm();
    if scale == 0.0 {
        return 0.0;
    }
    (a - &a.adjoint()).frob_norm() / scale
}

pub fn is_hermitian(a: &ComplexMatrix) -> bool {
    a.is_square() && hermitian_defect(a) <= HERMITIAN_TOL
}

/// Eigendecomposition of a Hermitian matrix. The input is symmetrized first.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<HermitianEigen> {
    check_finite(a)?;
    if !a.is_square() {
        return invalid("eigendecomposition needs a square matrix");
    }
    if hermitian_defect(a) > HERMITIAN_TOL {
        return invalid(format!("matrix is not Hermitian (relative defect {:.3e})", hermitian_defect(a)));
    }
    let sym = (a + &a.adjoint()).scale_real(0.5);
    Ok(hermitian_eigen_unchecked(sym.as_dmatrix().clone()))
}

pub(crate) fn hermitian_eigen_unchecked(sym: DMatrix<C64>) -> HermitianEigen {
    let dec = sym.symmetric_eigen();
    let raw: Vec<f64> = dec.eigenvalues.iter().copied().collect();
    let order = descending_order(&raw);
    HermitianEigen {
        values: order.iter().map(|&i| raw[i]).collect(),
        vectors: ComplexMatrix::from_dmatrix(permute_columns(&dec.eigenvectors, &order)),
    }
}

/// Eigenvalues (descending) of a matrix known to be Hermitian; skips the check.
pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Vec<f64> {
    let sym = (a + &a.adjoint()).scale_real(0.5);
    let mut w: Vec<f64> = sym.into_dmatrix().symmetric_eigenvalues().iter().copied().collect();
    w.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    w
}

fn reassemble(vectors: &ComplexMatrix, values: &[f64]) -> ComplexMatrix {
    let d = DVector::from_iterator(values.len(), values.iter().map(|&x| C64::new(x, 0.0)));
    let q = vectors.as_dmatrix();
    let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * d[j]);
    ComplexMatrix::from_dmatrix(scaled).matmul(&vectors.adjoint())
}

/// `f(A)` for Hermitian `A`.
pub fn spectral_apply(f: &ScalarTestFn, a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitian_eigen(a)?;
    let mapped: Vec<f64> = eig.values.iter().map(|&x| f.eval(x)).collect();
    Ok(reassemble(&eig.vectors, &mapped))
}

/// `|A| = (A A*)^{1/2}`.
pub fn abs_matrix(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_finite(a)?;
    if !a.is_square() {
        return invalid("absolute value needs a square matrix");
    }
    let eig = hermitian_eigen_unchecked(a.gram().into_dmatrix());
    let roots: Vec<f64> = eig.values.iter().map(|&x| x.max(0.0).sqrt()).collect();
    Ok(reassemble(&eig.vectors, &roots))
}

/// Clip singular values at 1, keeping singular vectors. Agrees with the
/// Hermitian spectral clip on Hermitian input.
pub fn chop_general(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return invalid("chop needs a square matrix");
    }
    let dec = svd(a)?;
    if dec.s.first().copied().unwrap_or(0.0) <= 1.0 {
        return Ok(a.clone());
    }
    let clipped: Vec<f64> = dec.s.iter().map(|&x| x.min(1.0)).collect();
    Ok(from_svd(&dec.u, &clipped, &dec.v))
}

pub(crate) fn from_svd(u: &ComplexMatrix, s: &[f64], v: &ComplexMatrix) -> ComplexMatrix {
    let ud = u.as_dmatrix();
    let us = DMatrix::from_fn(ud.nrows(), s.len(), |i, j| ud[(i, j)] * s[j]);
    ComplexMatrix::from_dmatrix(us).matmul(&v.adjoint())
}

/// Maximizer of `Re Tr(X L)` over `X` with `X X* = I`, for `L` of shape
/// `k x d`, `k >= d`. Returns the `d x k` co-isometry `W U*` where
/// `L = U S W*`, together with the attained value `sum(S)`.
pub fn polar_maximizer(l: &ComplexMatrix) -> Result<(ComplexMatrix, f64)> {
    if l.rows() < l.cols() {
        return invalid("polar maximizer needs rows >= cols");
    }
    let dec = svd(l)?;
    let value = dec.s.iter().sum();
    Ok((dec.v.matmul(&dec.u.adjoint()), value))
}

/// Unitary factor `U W*` of `A = U S W*` (nearest unitary).
pub fn unitary_polar_factor(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let dec = svd(a)?;
    Ok(dec.u.matmul(&dec.v.adjoint()))
}

/// Frobenius norm of `U U* - I` plus that of `U* U - I` (square case).
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let n = u.rows();
    let i = ComplexMatrix::identity(n);
    let a = (&u.gram() - &i).frob_norm();
    if u.is_square() {
        a + (&u.adjoint().matmul(u) - &i).frob_norm()
    } else {
        a
    }
}
