//! Matrix-valued functions on the hypercube `{-1, 1}^m`.
//!
//! Variables are 0-based. A subset `S` is a bitmask; a sign vector `sigma` is
//! indexed by the table position `t` with `sigma_i = -1` iff bit `i` of `t` is
//! set, so `W_S(sigma) = (-1)^{|S & t|}`.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::linalg::{op_norm, ComplexMatrix, C64};

/// Hard cap on the number of variables.
pub const MAX_VARS: usize = 24;
/// Largest `m` for which `2^m` tables are enumerated.
pub const MAX_ENUM_VARS: usize = 20;

pub fn check_enumerable(m: usize) -> Result<()> {
    if m > MAX_ENUM_VARS {
        Err(Error::EnumerationLimit { m, limit: MAX_ENUM_VARS })
    } else {
        Ok(())
    }
}

/// `W_S` evaluated at table position `t`.
#[inline]
pub fn walsh_sign(mask: u32, t: u32) -> f64 {
    if (mask & t).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Table position of a sign vector.
pub fn sign_index(sigma: &[i8]) -> Result<u32> {
    let mut t = 0u32;
    for (i, &s) in sigma.iter().enumerate() {
        match s {
            1 => {}
            -1 => t |= 1 << i,
            _ => return invalid(format!("sign vector entry {i} is {s}, expected +1 or -1")),
        }
    }
    Ok(t)
}

pub fn signs_of_index(t: u32, m: usize) -> Vec<i8> {
    (0..m).map(|i| if t >> i & 1 == 1 { -1 } else { 1 }).collect()
}

/// A function `{-1,1}^m -> C^{n x n}` held as its Fourier coefficients.
/// Absent subsets have zero coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFunction {
    m: usize,
    n: usize,
    coeffs: BTreeMap<u32, ComplexMatrix>,
}

impl CubeFunction {
    pub fn new(m: usize, n: usize, coeffs: BTreeMap<u32, ComplexMatrix>) -> Result<Self> {
        if m > MAX_VARS {
            return invalid(format!("m = {m} exceeds the cap of {MAX_VARS} variables"));
        }
        if n == 0 {
            return invalid("matrix dimension must be positive");
        }
        for (&mask, c) in &coeffs {
            if m < 32 && mask >> m != 0 {
                return invalid(format!("subset mask {mask:#x} uses variables beyond m = {m}"));
            }
            if c.rows() != n || c.cols() != n {
                return invalid(format!("coefficient for mask {mask:#x} is {}x{}, expected {n}x{n}", c.rows(), c.cols()));
            }
        }
        Ok(Self { m, n, coeffs })
    }

    pub fn zero(m: usize, n: usize) -> Result<Self> {
        Self::new(m, n, BTreeMap::new())
    }

    pub fn constant(m: usize, a: ComplexMatrix) -> Result<Self> {
        if !a.is_square() {
            return invalid("constant value must be square");
        }
        let n = a.rows();
        Self::new(m, n, BTreeMap::from([(0, a)]))
    }

    /// `sigma -> sigma_i I_n`.
    pub fn dictator(m: usize, n: usize, i: usize) -> Result<Self> {
        if i >= m {
            return invalid(format!("variable {i} out of range for m = {m}"));
        }
        Self::new(m, n, BTreeMap::from([(1u32 << i, ComplexMatrix::identity(n))]))
    }

    /// Transform of a full table of `2^m` values indexed by table position.
    pub fn fourier_transform(m: usize, values: &[ComplexMatrix]) -> Result<Self> {
        check_enumerable(m)?;
        let size = 1usize << m;
        if values.len() != size {
            return invalid(format!("expected {size} values for m = {m}, got {}", values.len()));
        }
        let n = values[0].rows();
        if values.iter().any(|v| v.rows() != n || v.cols() != n) {
            return invalid("all table values must share one square shape");
        }
        let scale = 1.0 / size as f64;
        let mut per_entry: Vec<Vec<C64>> = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let mut col: Vec<C64> = values.iter().map(|v| v.get(r, c)).collect();
                fwht(&mut col);
                per_entry.push(col);
            }
        }
        let mut coeffs = BTreeMap::new();
        for s in 0..size {
            let entries: Vec<C64> = per_entry.iter().map(|col| col[s] * scale).collect();
            if entries.iter().any(|z| z.re != 0.0 || z.im != 0.0) {
                coeffs.insert(s as u32, ComplexMatrix::from_row_major(n, n, entries)?);
            }
        }
        Self::new(m, n, coeffs)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &BTreeMap<u32, ComplexMatrix> {
        &self.coeffs
    }

    pub fn coeff(&self, mask: u32) -> ComplexMatrix {
        self.coeffs.get(&mask).cloned().unwrap_or_else(|| ComplexMatrix::zeros(self.n, self.n))
    }

    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .filter(|(_, c)| c.max_abs() > 0.0)
            .map(|(s, _)| s.count_ones() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Value at a sign vector.
    pub fn evaluate(&self, sigma: &[i8]) -> Result<ComplexMatrix> {
        if sigma.len() != self.m {
            return invalid(format!("expected {} signs, got {}", self.m, sigma.len()));
        }
        Ok(self.evaluate_index(sign_index(sigma)?))
    }

    /// Value at table position `t`.
    pub fn evaluate_index(&self, t: u32) -> ComplexMatrix {
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

    /// All `2^m` values in table order.
    pub fn values_table(&self) -> Result<Vec<ComplexMatrix>> {
        check_enumerable(self.m)?;
        Ok((0..1u32 << self.m).map(|t| self.evaluate_index(t)).collect())
    }

    /// `sum_S Tr(f(S) f(S)*)`.
    pub fn plancherel_mass(&self) -> f64 {
        self.coeffs.values().map(ComplexMatrix::frob_norm_sq).sum()
    }

    /// `sum_S Tr(f(S) h(S)*)`.
    pub fn inner_product(&self, h: &CubeFunction) -> Result<C64> {
        self.check_same_shape(h)?;
        Ok(self
            .coeffs
            .iter()
            .filter_map(|(s, a)| h.coeffs.get(s).map(|b| a.trace_of_product(&b.adjoint())))
            .sum())
    }

    /// `2^{-m} sum_sigma Tr(f(sigma) f(sigma)*)` by enumeration.
    pub fn pointwise_mass(&self) -> Result<f64> {
        let table = self.values_table()?;
        Ok(table.iter().map(ComplexMatrix::frob_norm_sq).sum::<f64>() / table.len() as f64)
    }

    pub fn influence(&self, i: usize) -> Result<f64> {
        if i >= self.m {
            return invalid(format!("variable {i} out of range for m = {}", self.m));
        }
        Ok(self
            .coeffs
            .iter()
            .filter(|(s, _)| *s >> i & 1 == 1)
            .map(|(_, c)| c.frob_norm_sq())
            .sum())
    }

    pub fn influences(&self) -> Vec<f64> {
        let mut inf = vec![0.0; self.m];
        for (&s, c) in &self.coeffs {
            let w = c.frob_norm_sq();
            for (i, x) in inf.iter_mut().enumerate() {
                if s >> i & 1 == 1 {
                    *x += w;
                }
            }
        }
        inf
    }

    pub fn max_influence(&self) -> f64 {
        self.influences().into_iter().fold(0.0, f64::max)
    }

    /// Coefficient of `S` scaled by `rho^{|S|}`.
    pub fn apply_trho(&self, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return invalid(format!("rho = {rho} must lie in [0, 1]"));
        }
        let coeffs = self
            .coeffs
            .iter()
            .filter_map(|(&s, c)| {
                let w = rho.powi(s.count_ones() as i32);
                (w != 0.0).then(|| (s, c.scale_real(w)))
            })
            .collect();
        Self::new(self.m, self.n, coeffs)
    }

    /// Keep the coefficients whose level `|S|` is selected.
    pub fn project_levels(&self, selector: impl Fn(usize) -> bool) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(s, _)| selector(s.count_ones() as usize))
            .map(|(&s, c)| (s, c.clone()))
            .collect();
        Self { m: self.m, n: self.n, coeffs }
    }

    /// Coefficientwise product `f(S) h(S)`.
    pub fn convolve(&self, h: &CubeFunction) -> Result<Self> {
        self.check_same_shape(h)?;
        let coeffs = self
            .coeffs
            .iter()
            .filter_map(|(s, a)| h.coeffs.get(s).map(|b| (*s, a.matmul(b))))
            .collect();
        Self::new(self.m, self.n, coeffs)
    }

    pub fn add(&self, h: &CubeFunction) -> Result<Self> {
        self.check_same_shape(h)?;
        let mut coeffs = self.coeffs.clone();
        for (&s, b) in &h.coeffs {
            let v = match coeffs.get(&s) {
                Some(a) => a + b,
                None => b.clone(),
            };
            coeffs.insert(s, v);
        }
        Self::new(self.m, self.n, coeffs)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        Self { m: self.m, n: self.n, coeffs: self.coeffs.iter().map(|(&s, a)| (s, a.scale_real(c))).collect() }
    }

    /// `max_sigma ||f(sigma)||` by enumeration.
    pub fn sup_norm(&self) -> Result<f64> {
        check_enumerable(self.m)?;
        let mut best: f64 = 0.0;
        for t in 0..1u32 << self.m {
            best = best.max(op_norm(&self.evaluate_index(t))?);
        }
        Ok(best)
    }

    fn check_same_shape(&self, h: &CubeFunction) -> Result<()> {
        if self.m != h.m || self.n != h.n {
            return invalid(format!("shape mismatch: (m={}, n={}) vs (m={}, n={})", self.m, self.n, h.m, h.n));
        }
        Ok(())
    }
}

/// In-place unnormalized Walsh-Hadamard transform.
fn fwht(a: &mut [C64]) {
    let mut h = 1;
    while h < a.len() {
        for block in (0..a.len()).step_by(2 * h) {
            for k in block..block + h {
                let (x, y) = (a[k], a[k + h]);
                a[k] = x + y;
                a[k + h] = x - y;
            }
        }
        h *= 2;
    }
}

#[derive(Serialize, Deserialize)]
struct CoeffEntry {
    mask: u32,
    matrix: ComplexMatrix,
}

#[derive(Serialize, Deserialize)]
struct CubeFunctionRepr {
    m: usize,
    n: usize,
    coeffs: Vec<CoeffEntry>,
}

impl Serialize for CubeFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CubeFunctionRepr {
            m: self.m,
            n: self.n,
            coeffs: self.coeffs.iter().map(|(&mask, c)| CoeffEntry { mask, matrix: c.clone() }).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CubeFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = CubeFunctionRepr::deserialize(d)?;
        let mut coeffs = BTreeMap::new();
        for e in r.coeffs {
            if coeffs.insert(e.mask, e.matrix).is_some() {
                return Err(D::Error::custom(format!("duplicate mask {}", e.mask)));
            }
        }
        CubeFunction::new(r.m, r.n, coeffs).map_err(D::Error::custom)
    }
}
