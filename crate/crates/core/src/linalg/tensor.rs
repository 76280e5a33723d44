use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use super::matrix::{ComplexMatrix, C64};
use crate::error::{invalid, Error, Result};

/// Entrywise tolerance for the factorization invariant of [`Tensor4`].
pub const FACTOR_TOL: f64 = 1e-10;

/// An `n^2 x n^2` matrix read as a 4-index tensor, row `(i, k)` at `i*n + k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tensor4 {
    n: usize,
    matrix: ComplexMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    factors: Option<Vec<ComplexMatrix>>,
}

fn square_root_dim(len: usize) -> Option<usize> {
    let n = (len as f64).sqrt().round() as usize;
    (n * n == len).then_some(n)
}

impl Tensor4 {
    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return invalid("tensor matrix must be square");
        }
        let n = square_root_dim(matrix.rows())
            .ok_or_else(|| Error::InvalidInput(format!("tensor size {} is not a perfect square", matrix.rows())))?;
        Ok(Self { n, matrix, factors: None })
    }

    /// `sum_i F_i (x) conj(F_i)`.
    pub fn from_psd_factors(n: usize, factors: Vec<ComplexMatrix>) -> Result<Self> {
        if n == 0 {
            return invalid("tensor dimension must be positive");
        }
        if factors.iter().any(|f| f.rows() != n || f.cols() != n) {
            return invalid(format!("all factors must be {n}x{n}"));
        }
        let mut matrix = ComplexMatrix::zeros(n * n, n * n);
        for f in &factors {
            matrix = &matrix + &f.kron(&f.conj());
        }
        Ok(Self { n, matrix, factors: Some(factors) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn factors(&self) -> Option<&[ComplexMatrix]> {
        self.factors.as_deref()
    }

    /// Entry `M_{ijkl}` at row `i*n + k`, column `j*n + l`.
    pub fn entry(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        self.matrix.get(i * self.n + k, j * self.n + l)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        let s = c.abs().sqrt();
        let factors = if c >= 0.0 {
            self.factors.as_ref().map(|fs| fs.iter().map(|f| f.scale_real(s)).collect())
        } else {
            None
        };
        Self { n: self.n, matrix: self.matrix.scale_real(c), factors }
    }
}

impl<'de> Deserialize<'de> for Tensor4 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            matrix: Option<ComplexMatrix>,
            factors: Option<Vec<ComplexMatrix>>,
        }
        let raw = Raw::deserialize(d)?;
        let t = match (raw.matrix, raw.factors) {
            (_, Some(factors)) => Tensor4::from_psd_factors(raw.n, factors).map_err(D::Error::custom)?,
            (Some(m), None) => Tensor4::from_matrix(m).map_err(D::Error::custom)?,
            (None, None) => return Err(D::Error::custom("tensor needs a matrix or a factor list")),
        };
        if t.n != raw.n {
            return Err(D::Error::custom(format!("declared n = {} but the matrix implies n = {}", raw.n, t.n)));
        }
        Ok(t)
    }
}

/// `Tr_2(X)_{ij} = sum_k X_{(i,k),(j,k)}`.
pub fn partial_trace_2(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = tensor_dim(x)?;
    Ok(ComplexMatrix::from_fn(n, n, |i, j| (0..n).map(|k| x.get(i * n + k, j * n + k)).sum()))
}

/// `Tr_1(X)_{kl} = sum_i X_{(i,k),(i,l)}`.
pub fn partial_trace_1(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = tensor_dim(x)?;
    Ok(ComplexMatrix::from_fn(n, n, |k, l| (0..n).map(|i| x.get(i * n + k, i * n + l)).sum()))
}

fn tensor_dim(x: &ComplexMatrix) -> Result<usize> {
    if !x.is_square() {
        return invalid("partial trace needs a square matrix");
    }
    square_root_dim(x.rows())
        .ok_or_else(|| Error::InvalidInput(format!("size {} is not a perfect square", x.rows())))
}

/// Zero-pad `A` into the top-left corner of a `p x p` matrix.
pub fn embed_iota(a: &ComplexMatrix, p: usize) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return invalid("embedding needs a square matrix");
    }
    if p < a.rows() {
        return invalid(format!("embedding dimension p = {p} is smaller than n = {}", a.rows()));
    }
    Ok(a.pad_to(p, p))
}

/// `sum_i iota(F_i) (x) conj(iota(F_i))`, which needs the factor list.
pub fn embed_iota_tensor(m: &Tensor4, p: usize) -> Result<Tensor4> {
    let factors = m
        .factors()
        .ok_or_else(|| Error::Unsupported("tensor embedding requires a factorization".into()))?;
    let padded = factors.iter().map(|f| embed_iota(f, p)).collect::<Result<Vec<_>>>()?;
    if p < m.n() {
        return invalid(format!("embedding dimension p = {p} is smaller than n = {}", m.n()));
    }
    Tensor4::from_psd_factors(p, padded)
}

/// An `n x n` matrix with entries in `C^N`, stored as `N` component matrices:
/// entry `(i, j)` is `(A_1[i,j], ..., A_N[i,j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorMatrix {
    components: Vec<ComplexMatrix>,
}

impl VectorMatrix {
    pub fn new(components: Vec<ComplexMatrix>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::InvalidInput("need at least one component".into()))?;
        let n = first.rows();
        if components.iter().any(|c| c.rows() != n || c.cols() != n) {
            return invalid("components must share one square shape");
        }
        Ok(Self { components })
    }

    /// `V_ij = (X_ij, 0, ..., 0)` in `C^big_n`.
    pub fn embedded_unitary(x: &ComplexMatrix, big_n: usize) -> Result<Self> {
        if big_n == 0 {
            return invalid("vector dimension must be positive");
        }
        let mut components = vec![x.clone()];
        components.extend((1..big_n).map(|_| ComplexMatrix::zeros(x.rows(), x.cols())));
        Self::new(components)
    }

    pub fn n(&self) -> usize {
        self.components[0].rows()
    }

    pub fn big_n(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ComplexMatrix] {
        &self.components
    }

    pub fn entry(&self, i: usize, j: usize) -> Vec<C64> {
        self.components.iter().map(|c| c.get(i, j)).collect()
    }

    /// `(U U*)_{ij} = sum_k <U_ik, U_jk>`.
    pub fn gram_left(&self) -> ComplexMatrix {
        let n = self.n();
        self.components.iter().fold(ComplexMatrix::zeros(n, n), |acc, c| &acc + &c.gram())
    }

    /// `(U* U)_{ij} = sum_k <U_kj, U_ki>`.
    pub fn gram_right(&self) -> ComplexMatrix {
        let n = self.n();
        self.components
            .iter()
            .fold(ComplexMatrix::zeros(n, n), |acc, c| &acc + &c.adjoint().matmul(c))
    }

    /// Largest entrywise deviation of `U U*` and `U* U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let id = ComplexMatrix::identity(self.n());
        self.gram_left().max_abs_diff(&id).max(self.gram_right().max_abs_diff(&id))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { components: self.components.iter().map(|m| m.scale(c)).collect() }
    }
}

/// `(U . V)_{(i,k),(j,l)} = <U_ij, V_kl> = sum_c U_c[i,j] conj(V_c[k,l])`.
pub fn odot(u: &VectorMatrix, v: &VectorMatrix) -> Result<ComplexMatrix> {
    if u.n() != v.n() || u.big_n() != v.big_n() {
        return invalid(format!(
            "shape mismatch: ({}, N={}) vs ({}, N={})",
            u.n(),
            u.big_n(),
            v.n(),
            v.big_n()
        ));
    }
    let n = u.n();
    let mut out = ComplexMatrix::zeros(n * n, n * n);
    for (a, b) in u.components.iter().zip(&v.components) {
        out = &out + &a.kron(&b.conj());
    }
    Ok(out)
}
