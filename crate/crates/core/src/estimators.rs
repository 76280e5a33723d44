//! Exact Boolean enumerators and Monte Carlo estimators of trace functionals
//! of `Q{inputs}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{draw, draw_rotated_tops, EnsembleSpec};
use crate::error::{invalid, Result};
use crate::fourier::{check_enumerable, CubeFunction};
use crate::linalg::{chop_general, hermitian_eigenvalues, op_norm, ComplexMatrix, ScalarTestFn, C64};
use crate::mc::{for_each_sample, mc_mean, mc_mean_vec, MCEstimate, RngStream, Welford};
use crate::ncpoly::{Input, NCPoly};

/// Sign patterns summed sequentially per parallel chunk.
const ENUM_CHUNK: u32 = 1 << 12;

/// Slack in the `||f(sigma)|| <= 1` precondition.
pub const NORM_PRECONDITION_TOL: f64 = 1e-9;

/// Singular values within this of 1 count as unclipped.
pub const CHOP_ROUNDING: f64 = 1e-12;

/// `(max(0, s - 1))^2` for `s = sqrt(l)`, ignoring rounding-level excess.
fn chop_excess_sq(l: f64) -> f64 {
    let e = l.sqrt() - 1.0;
    if e <= CHOP_ROUNDING {
        0.0
    } else {
        e * e
    }
}

/// `Tr` or `(1/n) Tr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceNorm {
    #[default]
    Normalized,
    Raw,
}

impl TraceNorm {
    pub fn factor(self, n: usize) -> f64 {
        match self {
            TraceNorm::Normalized => 1.0 / n as f64,
            TraceNorm::Raw => 1.0,
        }
    }
}

/// Which spectral functional `psi_trace_mc` averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PsiMode {
    /// `(1/n) Tr test(|Q|^2)`.
    A { test: ScalarTestFn },
    /// `(1/n) Tr (max(0, |Q| - 1))^2`.
    B,
}

/// `Q{inputs}` as either the full `n_var x n_var` value or, for rotated
/// inputs, its only nonzero block: the top `n x p` rows.
#[derive(Debug, Clone)]
pub enum Sampled {
    Full(ComplexMatrix),
    Top(ComplexMatrix),
}

impl Sampled {
    fn matrix(&self) -> &ComplexMatrix {
        match self {
            Sampled::Full(a) | Sampled::Top(a) => a,
        }
    }

    /// Nonzero block of `Q Q*`.
    pub fn gram(&self) -> ComplexMatrix {
        self.matrix().gram()
    }

    /// `Tr (Q Q*)^K`.
    pub fn trace_power(&self, k: u32) -> f64 {
        self.gram().pow(k).trace().re
    }

    /// Eigenvalues of `Q Q*` (descending), clamped at zero, plus the number
    /// of further eigenvalues that are zero by construction.
    pub fn squared_singular_values(&self, n_var: usize) -> (Vec<f64>, usize) {
        let w: Vec<f64> = hermitian_eigenvalues(&self.gram()).into_iter().map(|x| x.max(0.0)).collect();
        let extra = n_var - w.len();
        (w, extra)
    }

    /// `Tr(Chop Q)` with singular values clipped at 1.
    pub fn trace_of_chop(&self, n: usize) -> C64 {
        match self {
            Sampled::Full(a) => chop_general(a).expect("finite sample").trace(),
            Sampled::Top(w) => {
                // Chop Q = h(Q Q*) Q with h(s) = min(1, s^{-1/2}); Q Q* = diag(W W*, 0).
                let g = w.gram();
                let eig = crate::linalg::hermitian_eigen_unchecked(((&g + &g.adjoint()).scale_real(0.5)).into_dmatrix());
                let h: Vec<f64> = eig.values.iter().map(|&s| if s > 1.0 { s.sqrt().recip() } else { 1.0 }).collect();
                let q = &eig.vectors;
                let hq = ComplexMatrix::from_fn(n, n, |i, j| q.get(i, j) * h[j]).matmul(&q.adjoint());
                hq.matmul(&w.submatrix(0, 0, n, n)).trace()
            }
        }
    }
}

fn broadcast<'a>(specs: &'a [EnsembleSpec], m: usize) -> Result<Vec<&'a EnsembleSpec>> {
    match specs.len() {
        1 => Ok(vec![&specs[0]; m]),
        k if k == m => Ok(specs.iter().collect()),
        k => invalid(format!("need 1 or {m} ensemble specs, got {k}")),
    }
}

/// Per-variable draw plan, checked against the polynomial's dimensions.
#[derive(Debug, Clone)]
pub struct InputPlan<'a> {
    specs: Vec<&'a EnsembleSpec>,
    rotated: bool,
}

impl<'a> InputPlan<'a> {
    pub fn new(q: &NCPoly, specs: &'a [EnsembleSpec]) -> Result<Self> {
        let specs = broadcast(specs, q.m())?;
        for s in &specs {
            s.validate()?;
        }
        let rotated = !specs.is_empty()
            && specs.iter().all(|s| matches!(s, EnsembleSpec::EmbedRotate { p, .. } if *p == q.n_var()));
        if rotated {
            for s in &specs {
                if let EnsembleSpec::EmbedRotate { inner, .. } = s {
                    if let Some(d) = inner.output_dim() {
                        if d != q.n() {
                            return invalid(format!("inner ensemble dimension {d} does not match n = {}", q.n()));
                        }
                    }
                }
            }
        } else {
            for s in &specs {
                if let Some(d) = s.output_dim() {
                    if d != q.n_var() {
                        return invalid(format!(
                            "ensemble {} produces {d}x{d} inputs but the polynomial expects {}x{} (embed first)",
                            s.name(),
                            q.n_var(),
                            q.n_var()
                        ));
                    }
                }
            }
        }
        Ok(Self { specs, rotated })
    }

    pub fn is_rotated(&self) -> bool {
        self.rotated
    }

    /// One draw of `Q{inputs}` from `stream`; variables are drawn in order.
    pub fn sample(&self, q: &NCPoly, stream: RngStream) -> Sampled {
        let mut rng = stream.rng();
        if self.rotated {
            let inners: Vec<&EnsembleSpec> = self
                .specs
                .iter()
                .map(|s| match s {
                    EnsembleSpec::EmbedRotate { inner, .. } => &**inner,
                    _ => unreachable!("rotated plans hold embed_rotate specs"),
                })
                .collect();
            let tops = draw_rotated_tops(&inners, q.n(), q.n_var(), &mut rng);
            Sampled::Top(q.evaluate_rotated(&tops).expect("plan matches polynomial"))
        } else {
            let inputs: Vec<Input> = self.specs.iter().map(|s| draw(s, q.n_var(), &mut rng)).collect();
            Sampled::Full(q.evaluate(&inputs).expect("plan matches polynomial"))
        }
    }
}

fn enumerate_sum<F>(m: usize, f: F) -> Result<f64>
where
    F: Fn(u32) -> f64 + Sync,
{
    check_enumerable(m)?;
    let total = 1u32 << m;
    let chunks: Vec<f64> = (0..total.div_ceil(ENUM_CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * ENUM_CHUNK;
            let hi = (lo + ENUM_CHUNK).min(total);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    Ok(chunks.iter().sum::<f64>() / total as f64)
}

/// `2^{-m} sum_sigma c Tr |Q(sigma)|^{2K}` with `c = 1/n` or `1`.
pub fn trace_moment_boolean_exact(q: &NCPoly, k: u32, norm: TraceNorm) -> Result<f64> {
    if k == 0 {
        return invalid("K must be at least 1");
    }
    let s = enumerate_sum(q.m(), |t| q.evaluate_sign_index(t).gram().pow(k).trace().re)?;
    Ok(s * norm.factor(q.n()))
}

/// Exact `(1/n) E Tr |Q^iota{G_i H_i}|^2` for `G_i` with `E G = 0`,
/// `E G G* = I_n` and independent `p x p` Haar `H_i`.
///
/// `E H A H* = (Tr A / p) I`, so each factor after the first in a monomial
/// contributes `n / p`: the value is `(1/n) sum_S (n/p)^{max(|S|-1, 0)} ||Q(S)||_F^2`.
/// At `p = n` this is the Boolean second moment.
pub fn rotated_second_moment_exact(q: &NCPoly, p: usize) -> Result<f64> {
    let n = q.n();
    if p < n {
        return invalid(format!("p = {p} must be at least n = {n}"));
    }
    let r = n as f64 / p as f64;
    let s: f64 = q
        .coeffs()
        .iter()
        .map(|(s, c)| r.powi(s.count_ones().saturating_sub(1) as i32) * c.frob_norm_sq())
        .sum();
    Ok(s / n as f64)
}

/// Monte Carlo `E c Tr |Q{inputs}|^{2K}`.
pub fn trace_moment_mc(
    q: &NCPoly,
    specs: &[EnsembleSpec],
    k: u32,
    samples: usize,
    stream: RngStream,
    norm: TraceNorm,
) -> Result<MCEstimate> {
    if k == 0 {
        return invalid("K must be at least 1");
    }
    let plan = InputPlan::new(q, specs)?;
    let c = norm.factor(q.n());
    let label = format!("E{} Tr|Q|^{}", if norm == TraceNorm::Normalized { " (1/n)" } else { "" }, 2 * k);
    Ok(mc_mean(&label, samples, stream, |s| c * plan.sample(q, s).trace_power(k)))
}

fn psi_value(mode: &PsiMode, w: &[f64], extra: usize) -> f64 {
    match mode {
        PsiMode::A { test } => w.iter().map(|&x| test.eval(x)).sum::<f64>() + extra as f64 * test.eval(0.0),
        PsiMode::B => w.iter().map(|&x| chop_excess_sq(x)).sum(),
    }
}

/// Monte Carlo mean of `(1/n) Tr test(|Q|^2)` (mode A) or
/// `(1/n) Tr (max(0, |Q| - 1))^2` (mode B).
pub fn psi_trace_mc(
    q: &NCPoly,
    specs: &[EnsembleSpec],
    mode: &PsiMode,
    samples: usize,
    stream: RngStream,
) -> Result<MCEstimate> {
    if let PsiMode::A { test } = mode {
        test.validate()?;
    }
    let plan = InputPlan::new(q, specs)?;
    let c = 1.0 / q.n() as f64;
    Ok(mc_mean(&format!("psi trace [{mode:?}]"), samples, stream, |s| {
        let (w, extra) = plan.sample(q, s).squared_singular_values(q.n_var());
        c * psi_value(mode, &w, extra)
    }))
}

/// Boolean counterpart of [`psi_trace_mc`] by enumeration.
pub fn psi_trace_boolean_exact(q: &NCPoly, mode: &PsiMode) -> Result<f64> {
    let c = 1.0 / q.n() as f64;
    let nv = q.n_var();
    enumerate_sum(q.m(), |t| {
        let w: Vec<f64> = hermitian_eigenvalues(&q.evaluate_sign_index(t).gram()).into_iter().map(|x| x.max(0.0)).collect();
        let extra = nv - w.len();
        c * psi_value(mode, &w, extra)
    })
}

/// `(1/n) sum_S rho^{2|S|} Tr |f(S)|^2`.
pub fn noise_stability_exact(f: &CubeFunction, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return invalid(format!("rho = {rho} must lie in [0, 1]"));
    }
    let s: f64 = f.coeffs().iter().map(|(s, c)| rho.powi(2 * s.count_ones() as i32) * c.frob_norm_sq()).sum();
    Ok(s / f.n() as f64)
}

pub fn check_bounded_by_one(f: &CubeFunction) -> Result<f64> {
    let sup = f.sup_norm()?;
    if sup > 1.0 + NORM_PRECONDITION_TOL {
        return invalid(format!("requires ||f(sigma)|| <= 1 for all sigma, found {sup:.6}"));
    }
    Ok(sup)
}

/// Chop statistics of `T_rho Q_f^iota` under `embed_rotate(inner, p)` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChopStats {
    /// `(1/n) E Tr |T Q - Chop T Q|^2`.
    pub distance: MCEstimate,
    /// `(1/n) E Tr |Chop T Q|^2`.
    pub stability: MCEstimate,
    /// `(1/n) E Re Tr Chop T Q`.
    pub trace_re: MCEstimate,
    /// `(1/n) E Im Tr Chop T Q`.
    pub trace_im: MCEstimate,
}

impl ChopStats {
    pub fn trace_modulus(&self) -> f64 {
        self.trace_re.mean.hypot(self.trace_im.mean)
    }
}

fn chop_plan(f: &CubeFunction, rho: f64, p: usize, inner: &EnsembleSpec) -> Result<(NCPoly, Vec<EnsembleSpec>)> {
    check_bounded_by_one(f)?;
    let q = NCPoly::from_cube_function(&f.apply_trho(rho)?).embed(p)?;
    let spec = EnsembleSpec::embed_rotate(inner.clone(), p)?;
    Ok((q, vec![spec]))
}

pub fn chop_stats_mc(
    f: &CubeFunction,
    rho: f64,
    p: usize,
    inner: &EnsembleSpec,
    samples: usize,
    stream: RngStream,
) -> Result<ChopStats> {
    let (q, specs) = chop_plan(f, rho, p, inner)?;
    let plan = InputPlan::new(&q, &specs)?;
    let n = q.n();
    let c = 1.0 / n as f64;
    let acc = mc_mean_vec(samples, 4, stream, |s| {
        let x = plan.sample(&q, s);
        let (w, _) = x.squared_singular_values(q.n_var());
        let dist: f64 = w.iter().map(|&l| chop_excess_sq(l)).sum();
        let stab: f64 = w.iter().map(|&l| l.min(1.0)).sum();
        let tr = x.trace_of_chop(n);
        vec![c * dist, c * stab, c * tr.re, c * tr.im]
    });
    let est = |w: &Welford, label: &str| w.estimate(format!("{label} [rho={rho}, p={p}]"), stream);
    Ok(ChopStats {
        distance: est(&acc[0], "(1/n) E Tr|TQ - Chop TQ|^2"),
        stability: est(&acc[1], "(1/n) E Tr|Chop TQ|^2"),
        trace_re: est(&acc[2], "(1/n) E Re Tr Chop TQ"),
        trace_im: est(&acc[3], "(1/n) E Im Tr Chop TQ"),
    })
}

/// `(1/n) E Tr |T_rho Q_f^iota - Chop T_rho Q_f^iota|^2`.
pub fn chop_distance_mc(
    f: &CubeFunction,
    rho: f64,
    p: usize,
    inner: &EnsembleSpec,
    samples: usize,
    stream: RngStream,
) -> Result<MCEstimate> {
    let (q, specs) = chop_plan(f, rho, p, inner)?;
    psi_trace_mc(&q, &specs, &PsiMode::B, samples, stream)
}

/// Exceedance probabilities `P(||Q|| > t)` on a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub thresholds: Vec<f64>,
    /// Exact, by enumeration over sign patterns.
    pub boolean: Option<Vec<f64>>,
    /// Empirical, under the matrix ensemble.
    pub ensemble: Vec<f64>,
    pub samples: usize,
    /// Half-width of the 95% Dvoretzky-Kiefer-Wolfowitz band.
    pub dkw_epsilon: f64,
    pub seed: u64,
    pub stream_index: u64,
}

impl CdfTable {
    pub fn sup_gap(&self) -> Option<f64> {
        self.boolean
            .as_ref()
            .map(|b| b.iter().zip(&self.ensemble).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }
}

pub fn dkw_epsilon(samples: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * samples as f64)).sqrt()
}

fn exceedance(norms: &[f64], thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|&t| norms.iter().filter(|&&x| x > t).count() as f64 / norms.len() as f64)
        .collect()
}

pub fn opnorm_cdf(
    q: &NCPoly,
    specs: &[EnsembleSpec],
    thresholds: &[f64],
    samples: usize,
    stream: RngStream,
) -> Result<CdfTable> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) || thresholds.iter().any(|t| !t.is_finite()) {
        return invalid("threshold grid must be finite and sorted");
    }
    if samples == 0 {
        return invalid("need at least one sample");
    }
    let plan = InputPlan::new(q, specs)?;
    let boolean = if check_enumerable(q.m()).is_ok() {
        let norms: Vec<f64> =
            (0..1u32 << q.m()).into_par_iter().map(|t| op_norm(&q.evaluate_sign_index(t)).expect("finite")).collect();
        Some(exceedance(&norms, thresholds))
    } else {
        None
    };
    let mut norms = Vec::with_capacity(samples);
    for_each_sample(
        samples,
        stream,
        |_, s| {
            let (w, _) = plan.sample(q, s).squared_singular_values(q.n_var());
            w.first().copied().unwrap_or(0.0).sqrt()
        },
        |x| norms.push(x),
    );
    Ok(CdfTable {
        thresholds: thresholds.to_vec(),
        boolean,
        ensemble: exceedance(&norms, thresholds),
        samples,
        dkw_epsilon: dkw_epsilon(samples, 0.05),
        seed: stream.master_seed,
        stream_index: stream.stream_index,
    })
}
