use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};

pub type C64 = Complex64;

/// Products at or above this many multiply-adds are routed through four real
/// GEMMs instead of the generic complex kernel.
const SPLIT_GEMM_THRESHOLD: usize = 24 * 24 * 24;

/// Dense complex matrix. All entries are finite.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn scalar_identity(n: usize, c: C64) -> Self {
        Self(DMatrix::from_diagonal_element(n, n, c))
    }

    /// Build from row-major entries, rejecting non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid("matrix dimensions must be positive");
        }
        if entries.len() != rows * cols {
            return invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            ));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("matrix entries must be finite");
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, &entries)))
    }

    /// Real matrix from row-major values.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::from_row_major(rows, cols, entries.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        Self(DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { C64::new(0.0, 0.0) }))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diagonal(&d)
    }

    pub fn from_dmatrix(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn trace(&self) -> C64 {
        self.0.diagonal().iter().sum()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self(self.0.map(|z| z * c))
    }

    pub fn scale_real(&self, c: f64) -> Self {
        Self(self.0.map(|z| z * c))
    }

    /// Kronecker product with the index convention `(i*rb + k, j*cb + l) = a_ij b_kl`.
    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// `Tr(A A*)`, the squared Frobenius norm.
    pub fn frob_norm_sq(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.0.shape(), other.0.shape(), "shape mismatch in max_abs_diff");
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn submatrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self(self.0.view((r0, c0), (nr, nc)).into_owned())
    }

    /// Place `self` into the top-left corner of a `rows x cols` zero matrix.
    pub fn pad_to(&self, rows: usize, cols: usize) -> Self {
        assert!(rows >= self.rows() && cols >= self.cols());
        let mut out = DMatrix::zeros(rows, cols);
        out.view_mut((0, 0), (self.rows(), self.cols())).copy_from(&self.0);
        Self(out)
    }

    /// `Tr(A B)` without forming the product.
    pub fn trace_of_product(&self, other: &Self) -> C64 {
        assert_eq!(self.cols(), other.rows());
        assert_eq!(self.rows(), other.cols());
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.rows() {
            for k in 0..self.cols() {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc
    }

    /// `A A*`.
    pub fn gram(&self) -> Self {
        self * &self.adjoint()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols(),
            other.rows(),
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows(),
            self.cols(),
            other.rows(),
            other.cols()
        );
        if self.rows() * self.cols() * other.cols() >= SPLIT_GEMM_THRESHOLD {
            split_gemm(&self.0, &other.0)
        } else {
            Self(&self.0 * &other.0)
        }
    }

    /// Integer power by repeated multiplication; `pow(0)` is the identity.
    pub fn pow(&self, k: u32) -> Self {
        assert!(self.is_square());
        let mut acc = Self::identity(self.rows());
        for _ in 0..k {
            acc = acc.matmul(self);
        }
        acc
    }
}

fn split_gemm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> ComplexMatrix {
    let ar = a.map(|z| z.re);
    let ai = a.map(|z| z.im);
    let br = b.map(|z| z.re);
    let bi = b.map(|z| z.im);
    let rr = &ar * &br - &ai * &bi;
    let ii = &ar * &bi + &ai * &br;
    ComplexMatrix(rr.zip_map(&ii, C64::new))
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix{}x{}", self.rows(), self.cols())?;
        let mut list = f.debug_list();
        for i in 0..self.rows() {
            let row: Vec<(f64, f64)> = (0..self.cols()).map(|j| (self.0[(i, j)].re, self.0[(i, j)].im)).collect();
            list.entry(&row);
        }
        list.finish()
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| [self.0[(i, j)].re, self.0[(i, j)].im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nc) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        let entries = rows.into_iter().flatten().map(|[re, im]| C64::new(re, im)).collect();
        ComplexMatrix::from_row_major(nr, nc, entries).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(ComplexMatrix::from_row_major(1, 2, vec![c(1.0, 0.0), c(f64::NAN, 0.0)]).is_err());
        assert!(ComplexMatrix::from_row_major(2, 2, vec![c(1.0, 0.0)]).is_err());
        assert!(serde_json::from_str::<ComplexMatrix>("[[[1,0],[2,0]],[[3,0]]]").is_err());
    }

    #[test]
    fn split_gemm_matches_generic_kernel() {
        let a = ComplexMatrix::from_fn(40, 30, |i, j| c((i as f64 * 0.3).sin(), (j as f64 * 0.7).cos()));
        let b = ComplexMatrix::from_fn(30, 35, |i, j| c((i * j) as f64 * 0.01, (i + j) as f64 * -0.02));
        let fast = a.matmul(&b);
        let slow = ComplexMatrix(&a.0 * &b.0);
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }

    #[test]
    fn json_layout_is_nested_re_im_pairs() {
        let m = ComplexMatrix::from_row_major(1, 2, vec![c(1.0, -2.0), c(0.5, 0.0)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[[1.0,-2.0],[0.5,0.0]]]");
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn kron_index_convention() {
        let a = ComplexMatrix::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let k = a.kron(&b);
        // (i*2 + k, j*2 + l) = a_ij b_kl
        assert_eq!(k.get(1 * 2 + 0, 0 * 2 + 1), c(3.0, 0.0));
        assert_eq!(k.get(0 * 2 + 1, 1 * 2 + 0), c(2.0, 0.0));
    }
}
