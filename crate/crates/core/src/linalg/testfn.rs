use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};

/// Scalar functions applied to spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarTestFn {
    Identity,
    /// Clip to `[-1, 1]`.
    Chop,
    /// `max(0, |t| - 1)`.
    PsiHinge,
    /// 0 below `r - s`, 1 above `r + s`, linear in between.
    PsiRamp { r: f64, s: f64 },
    /// Gaussian smoothing of a piecewise-linear base with width `lambda`.
    Mollified { base: Box<ScalarTestFn>, lambda: f64 },
    /// `t^k`.
    PolyPower { k: u32 },
}

/// `c0 + c1 x + sum_k a_k (x - t_k)_+`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    pub c0: f64,
    pub c1: f64,
    pub kinks: Vec<(f64, f64)>,
}

pub fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

impl PiecewiseLinear {
    pub fn eval(&self, x: f64) -> f64 {
        self.c0 + self.c1 * x + self.kinks.iter().map(|&(t, a)| a * (x - t).max(0.0)).sum::<f64>()
    }

    /// `k`-th derivative of the Gaussian-smoothed function, `k <= 3`.
    pub fn smoothed_derivative(&self, x: f64, lambda: f64, k: u32) -> f64 {
        let linear = match k {
            0 => self.c0 + self.c1 * x,
            1 => self.c1,
            _ => 0.0,
        };
        let kinks: f64 = self
            .kinks
            .iter()
            .map(|&(t, a)| {
                let u = (x - t) / lambda;
                let v = match k {
                    0 => (x - t) * std_normal_cdf(u) + lambda * std_normal_pdf(u),
                    1 => std_normal_cdf(u),
                    2 => std_normal_pdf(u) / lambda,
                    _ => -u * std_normal_pdf(u) / (lambda * lambda),
                };
                a * v
            })
            .sum();
        linear + kinks
    }
}

impl ScalarTestFn {
    pub fn mollified(base: ScalarTestFn, lambda: f64) -> Result<Self> {
        let f = ScalarTestFn::Mollified { base: Box::new(base), lambda };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarTestFn::PsiRamp { r, s } => {
                if !(r.is_finite() && s.is_finite() && *s > 0.0) {
                    return invalid("ramp needs finite r and s > 0");
                }
            }
            ScalarTestFn::Mollified { base, lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return invalid("mollifier width must be positive");
                }
                base.validate()?;
                if base.piecewise_linear().is_none() {
                    return invalid("mollification needs a piecewise-linear base (chop, psi_hinge, psi_ramp, identity)");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Piecewise-linear form, if the function has one.
    pub fn piecewise_linear(&self) -> Option<PiecewiseLinear> {
        match self {
            ScalarTestFn::Identity => Some(PiecewiseLinear { c0: 0.0, c1: 1.0, kinks: vec![] }),
            ScalarTestFn::Chop => Some(PiecewiseLinear { c0: -1.0, c1: 0.0, kinks: vec![(-1.0, 1.0), (1.0, -1.0)] }),
            ScalarTestFn::PsiHinge => Some(PiecewiseLinear { c0: -1.0, c1: -1.0, kinks: vec![(-1.0, 1.0), (1.0, 1.0)] }),
            ScalarTestFn::PsiRamp { r, s } => {
                let a = 1.0 / (2.0 * s);
                Some(PiecewiseLinear { c0: 0.0, c1: 0.0, kinks: vec![(r - s, a), (r + s, -a)] })
            }
            _ => None,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarTestFn::Identity => x,
            ScalarTestFn::Chop => x.clamp(-1.0, 1.0),
            ScalarTestFn::PsiHinge => (x.abs() - 1.0).max(0.0),
            ScalarTestFn::PsiRamp { r, s } => ((x - (r - s)) / (2.0 * s)).clamp(0.0, 1.0),
            ScalarTestFn::PolyPower { k } => x.powi(*k as i32),
            ScalarTestFn::Mollified { .. } => self.derivative(x, 0).unwrap_or(f64::NAN),
        }
    }

    /// `k`-th derivative, `k <= 3`, for mollified functions only.
    pub fn derivative(&self, x: f64, k: u32) -> Result<f64> {
        match self {
            ScalarTestFn::Mollified { base, lambda } => {
                if k > 3 {
                    return invalid("derivatives above order 3 are not exposed");
                }
                let pl = base
                    .piecewise_linear()
                    .ok_or_else(|| crate::error::Error::InvalidInput("base is not piecewise linear".into()))?;
                Ok(pl.smoothed_derivative(x, *lambda, k))
            }
            _ => invalid("derivatives are exposed for mollified functions only"),
        }
    }
}
