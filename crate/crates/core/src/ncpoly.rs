//! Noncommutative multilinear polynomials with matrix coefficients.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::fourier::{walsh_sign, CubeFunction, MAX_VARS};
use crate::linalg::{ComplexMatrix, C64};

/// One polynomial argument. Scalars stand for multiples of the identity.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Scalar(f64),
    Matrix(ComplexMatrix),
}

/// `Q(X_1..X_m) = sum_S Q(S) X_{s1} X_{s2} ... X_{sk}` with `s1 < s2 < ... < sk`.
///
/// Coefficients are `n x n`. An embedded polynomial expects `n_var x n_var`
/// inputs and uses `iota(Q(S))`, the zero-padded coefficient, in place of
/// `Q(S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NCPoly {
    m: usize,
    n: usize,
    n_var: usize,
    coeffs: BTreeMap<u32, ComplexMatrix>,
}

impl NCPoly {
    pub fn new(m: usize, n: usize, coeffs: BTreeMap<u32, ComplexMatrix>) -> Result<Self> {
        let f = CubeFunction::new(m, n, coeffs)?;
        Ok(Self::from_cube_function(&f))
    }

    pub fn from_cube_function(f: &CubeFunction) -> Self {
        Self { m: f.m(), n: f.n(), n_var: f.n(), coeffs: f.coeffs().clone() }
    }

    pub fn to_cube_function(&self) -> CubeFunction {
        CubeFunction::new(self.m, self.n, self.coeffs.clone()).expect("polynomial invariants match cube functions")
    }

    /// `sum_S iota(Q(S)) prod X_i` over `p x p` inputs.
    pub fn embed(&self, p: usize) -> Result<Self> {
        if p < self.n {
            return invalid(format!("embedding dimension p = {p} is smaller than n = {}", self.n));
        }
        Ok(Self { n_var: p, ..self.clone() })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Coefficient dimension, the `n` of the `(1/n) Tr` normalization.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_var(&self) -> usize {
        self.n_var
    }

    pub fn is_embedded(&self) -> bool {
        self.n_var != self.n
    }

    pub fn coeffs(&self) -> &BTreeMap<u32, ComplexMatrix> {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.to_cube_function().degree()
    }

    /// Coefficient as used in evaluation (`n_var x n_var`).
    pub fn effective_coeff(&self, mask: u32) -> ComplexMatrix {
        match self.coeffs.get(&mask) {
            Some(c) => c.pad_to(self.n_var, self.n_var),
            None => ComplexMatrix::zeros(self.n_var, self.n_var),
        }
    }

    pub fn influences(&self) -> Vec<f64> {
        self.to_cube_function().influences()
    }

    pub fn max_influence(&self) -> f64 {
        self.to_cube_function().max_influence()
    }

    /// `sum_{S nonempty} Tr(Q(S) Q(S)*)`.
    pub fn variance(&self) -> f64 {
        self.coeffs.iter().filter(|(&s, _)| s != 0).map(|(_, c)| c.frob_norm_sq()).sum()
    }

    pub fn plancherel_mass(&self) -> f64 {
        self.coeffs.values().map(ComplexMatrix::frob_norm_sq).sum()
    }

    /// Apply `T_rho` to the coefficients.
    pub fn apply_trho(&self, rho: f64) -> Result<Self> {
        let f = self.to_cube_function().apply_trho(rho)?;
        Ok(Self { coeffs: f.coeffs().clone(), ..self.clone() })
    }

    fn check_inputs(&self, inputs: &[Input]) -> Result<()> {
        if inputs.len() != self.m {
            return invalid(format!("expected {} inputs, got {}", self.m, inputs.len()));
        }
        for (i, x) in inputs.iter().enumerate() {
            if let Input::Matrix(a) = x {
                if a.rows() != self.n_var || a.cols() != self.n_var {
                    return invalid(format!(
                        "input {i} is {}x{}, expected {}x{}",
                        a.rows(),
                        a.cols(),
                        self.n_var,
                        self.n_var
                    ));
                }
            }
        }
        Ok(())
    }

    /// Term-by-term evaluation with products in increasing index order.
    pub fn evaluate(&self, inputs: &[Input]) -> Result<ComplexMatrix> {
        self.check_inputs(inputs)?;
        let (n, nv) = (self.n, self.n_var);
        let mut acc = ComplexMatrix::zeros(nv, nv);
        for (&s, c) in &self.coeffs {
            // Only the top n rows of iota(Q(S)) X ... are nonzero.
            let mut term = c.pad_to(n, nv);
            for (i, x) in inputs.iter().enumerate() {
                if s >> i & 1 == 1 {
                    term = match x {
                        Input::Scalar(b) => term.scale_real(*b),
                        Input::Matrix(a) => term.matmul(a),
                    };
                }
            }
            acc = &acc + &term.pad_to(nv, nv);
        }
        Ok(acc)
    }

    pub fn evaluate_matrices(&self, inputs: &[ComplexMatrix]) -> Result<ComplexMatrix> {
        let inputs: Vec<Input> = inputs.iter().cloned().map(Input::Matrix).collect();
        self.evaluate(&inputs)
    }

    /// `sum_S Q(S) prod_{i in S} b_i`, the `n x n` value at scalar inputs.
    pub fn evaluate_scalars(&self, b: &[f64]) -> Result<ComplexMatrix> {
        if b.len() != self.m {
            return invalid(format!("expected {} inputs, got {}", self.m, b.len()));
        }
        let n = self.n;
        let mut acc = ComplexMatrix::zeros(n, n);
        for (&s, c) in &self.coeffs {
            let w: f64 = (0..self.m).filter(|&i| s >> i & 1 == 1).map(|i| b[i]).product();
            acc = &acc + &c.scale_real(w);
        }
        Ok(acc)
    }

    /// Value at sign-table position `t` (see [`crate::fourier`]), `n x n`.
    pub fn evaluate_sign_index(&self, t: u32) -> ComplexMatrix {
        let n = self.n;
        let mut acc = vec![C64::new(0.0, 0.0); n * n];
        for (&s, c) in &self.coeffs {
            let w = walsh_sign(s, t);
            for (k, z) in acc.iter_mut().enumerate() {
                *z += c.get(k / n, k % n) * w;
            }
        }
        ComplexMatrix::from_fn(n, n, |i, j| acc[i * n + j])
    }

    /// Top `n x p` block of `Q^iota` at inputs `X_i = [T_i; 0]`, given the
    /// `n x p` blocks `T_i`. Products collapse to
    /// `T_{s1}[:, :n] ... T_{s(k-1)}[:, :n] T_{sk}`.
    pub fn evaluate_rotated(&self, tops: &[ComplexMatrix]) -> Result<ComplexMatrix> {
        let (n, p) = (self.n, self.n_var);
        if tops.len() != self.m {
            return invalid(format!("expected {} inputs, got {}", self.m, tops.len()));
        }
        if tops.iter().any(|t| t.rows() != n || t.cols() != p) {
            return invalid(format!("rotated inputs must be {n}x{p} top blocks"));
        }
        let heads: Vec<ComplexMatrix> = tops.iter().map(|t| t.submatrix(0, 0, n, n)).collect();
        let mut by_last: Vec<Option<ComplexMatrix>> = vec![None; self.m];
        let mut out = ComplexMatrix::zeros(n, p);
        for (&s, c) in &self.coeffs {
            if s == 0 {
                out = &out + &c.pad_to(n, p);
                continue;
            }
            let last = 31 - s.leading_zeros() as usize;
            let mut prefix = c.clone();
            for (i, h) in heads.iter().enumerate().take(last) {
                if s >> i & 1 == 1 {
                    prefix = prefix.matmul(h);
                }
            }
            by_last[last] = Some(match by_last[last].take() {
                Some(acc) => &acc + &prefix,
                None => prefix,
            });
        }
        for (i, acc) in by_last.into_iter().enumerate() {
            if let Some(acc) = acc {
                out = &out + &acc.matmul(&tops[i]);
            }
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct CoeffEntry {
    mask: u32,
    matrix: ComplexMatrix,
}

#[derive(Serialize, Deserialize)]
struct NCPolyRepr {
    m: usize,
    n: usize,
    n_var: usize,
    embedded: bool,
    coeffs: Vec<CoeffEntry>,
}

impl Serialize for NCPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NCPolyRepr {
            m: self.m,
            n: self.n,
            n_var: self.n_var,
            embedded: self.is_embedded(),
            coeffs: self.coeffs.iter().map(|(&mask, c)| CoeffEntry { mask, matrix: c.clone() }).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NCPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = NCPolyRepr::deserialize(d)?;
        if r.m > MAX_VARS {
            return Err(D::Error::custom("too many variables"));
        }
        let coeffs: BTreeMap<u32, ComplexMatrix> = r.coeffs.into_iter().map(|e| (e.mask, e.matrix)).collect();
        let q = NCPoly::new(r.m, r.n, coeffs).map_err(D::Error::custom)?;
        if r.embedded != (r.n_var != r.n) {
            return Err(D::Error::custom("embedded flag disagrees with n_var"));
        }
        q.embed(r.n_var).map_err(D::Error::custom)
    }
}
