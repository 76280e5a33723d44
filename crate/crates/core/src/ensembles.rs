//! Random matrix ensembles and checks of their moment constants.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigenvalues, is_hermitian, op_norm, ComplexMatrix, C64};
use crate::mc::{for_each_sample, mc_mean, MCEstimate, MatrixWelford, RngStream};
use crate::ncpoly::Input;

/// Tolerance for the two frame identities.
pub const FRAME_TOL: f64 = 1e-8;

/// A distribution of one polynomial input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawSpec")]
pub enum EnsembleSpec {
    /// Uniform `+-1`, acting as a multiple of the identity.
    Rademacher,
    /// `p x p` Haar unitary.
    HaarUnitary { p: usize },
    /// `sum_i g_i V_i` with standard complex Gaussians `g_i`.
    GaussianFrame { frame: Vec<ComplexMatrix> },
    /// Frame over the matrix units `E_ij / sqrt(n)`: i.i.d. complex Gaussian
    /// entries of variance `1/n`, so that `E G G* = I`.
    WignerGue { n: usize },
    /// `iota(G) H` with `G` from `inner` and an independent `p x p` Haar `H`.
    EmbedRotate { inner: Box<EnsembleSpec>, p: usize },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawSpec {
    Rademacher,
    HaarUnitary { p: usize },
    GaussianFrame { frame: Vec<ComplexMatrix> },
    WignerGue { n: usize },
    EmbedRotate { inner: Box<EnsembleSpec>, p: usize },
}

impl TryFrom<RawSpec> for EnsembleSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        let spec = match r {
            RawSpec::Rademacher => EnsembleSpec::Rademacher,
            RawSpec::HaarUnitary { p } => EnsembleSpec::HaarUnitary { p },
            RawSpec::GaussianFrame { frame } => EnsembleSpec::GaussianFrame { frame },
            RawSpec::WignerGue { n } => EnsembleSpec::WignerGue { n },
            RawSpec::EmbedRotate { inner, p } => EnsembleSpec::EmbedRotate { inner, p },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Largest entrywise deviations of `sum V V*` and `sum V* V` from `I`.
pub fn frame_defects(frame: &[ComplexMatrix]) -> Result<(f64, f64)> {
    let n = frame.first().map(ComplexMatrix::rows).ok_or_else(|| Error::InvalidInput("empty frame".into()))?;
    if frame.iter().any(|v| v.rows() != n || v.cols() != n) {
        return invalid("frame matrices must share one square shape");
    }
    let mut left = ComplexMatrix::zeros(n, n);
    let mut right = ComplexMatrix::zeros(n, n);
    for v in frame {
        left = &left + &v.gram();
        right = &right + &v.adjoint().matmul(v);
    }
    let id = ComplexMatrix::identity(n);
    Ok((left.max_abs_diff(&id), right.max_abs_diff(&id)))
}

/// `E_ij / sqrt(n)` in row-major order of `(i, j)`.
pub fn standard_basis_frame(n: usize) -> Vec<ComplexMatrix> {
    let s = 1.0 / (n as f64).sqrt();
    (0..n * n)
        .map(|k| ComplexMatrix::from_fn(n, n, |i, j| if i * n + j == k { C64::new(s, 0.0) } else { C64::new(0.0, 0.0) }))
        .collect()
}

impl EnsembleSpec {
    /// Frame ensemble; both `sum V V* = I` and `sum V* V = I` are enforced.
    pub fn gaussian_frame(frame: Vec<ComplexMatrix>) -> Result<Self> {
        let spec = EnsembleSpec::GaussianFrame { frame };
        spec.validate()?;
        Ok(spec)
    }

    pub fn embed_rotate(inner: EnsembleSpec, p: usize) -> Result<Self> {
        let spec = EnsembleSpec::EmbedRotate { inner: Box::new(inner), p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnsembleSpec::Rademacher => Ok(()),
            EnsembleSpec::HaarUnitary { p } | EnsembleSpec::WignerGue { n: p } => {
                if *p == 0 {
                    invalid("dimension must be positive")
                } else {
                    Ok(())
                }
            }
            EnsembleSpec::GaussianFrame { frame } => {
                let (l, r) = frame_defects(frame)?;
                if l > FRAME_TOL || r > FRAME_TOL {
                    return invalid(format!(
                        "frame violates sum V V* = I (defect {l:.2e}) or sum V* V = I (defect {r:.2e})"
                    ));
                }
                Ok(())
            }
            EnsembleSpec::EmbedRotate { inner, p } => {
                inner.validate()?;
                if matches!(**inner, EnsembleSpec::EmbedRotate { .. }) {
                    return invalid("nested embed_rotate is not supported");
                }
                if let Some(n) = inner.output_dim() {
                    if *p < n {
                        return invalid(format!("embed_rotate needs p >= inner dimension ({p} < {n})"));
                    }
                }
                if *p == 0 {
                    return invalid("dimension must be positive");
                }
                Ok(())
            }
        }
    }

    /// Matrix size of a draw; `None` for scalar ensembles.
    pub fn output_dim(&self) -> Option<usize> {
        match self {
            EnsembleSpec::Rademacher => None,
            EnsembleSpec::HaarUnitary { p } => Some(*p),
            EnsembleSpec::GaussianFrame { frame } => frame.first().map(ComplexMatrix::rows),
            EnsembleSpec::WignerGue { n } => Some(*n),
            EnsembleSpec::EmbedRotate { p, .. } => Some(*p),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnsembleSpec::Rademacher => "rademacher",
            EnsembleSpec::HaarUnitary { .. } => "haar_unitary",
            EnsembleSpec::GaussianFrame { .. } => "gaussian_frame",
            EnsembleSpec::WignerGue { .. } => "wigner_gue",
            EnsembleSpec::EmbedRotate { .. } => "embed_rotate",
        }
    }
}

/// Standard complex Gaussian, `E g = 0`, `E |g|^2 = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// i.i.d. complex Gaussian entries with `E |g|^2 = variance`, drawn row by row.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> ComplexMatrix {
    let s = variance.sqrt();
    let entries: Vec<C64> = (0..rows * cols).map(|_| complex_gaussian(rng) * s).collect();
    ComplexMatrix::from_fn(rows, cols, |i, j| entries[i * cols + j])
}

/// First `n` columns of a `p x p` Haar unitary: QR of a `p x n` Ginibre
/// matrix with the column phases fixed so that `R` has positive diagonal.
pub fn haar_columns<R: Rng + ?Sized>(p: usize, n: usize, rng: &mut R) -> ComplexMatrix {
    let g = ginibre(p, n, 1.0, rng);
    let qr = g.into_dmatrix().qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = ComplexMatrix::from_dmatrix(q);
    let phases: Vec<C64> = (0..n)
        .map(|j| {
            let d = r[(j, j)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect();
    q = ComplexMatrix::from_fn(p, n, |i, j| q.get(i, j) * phases[j]);
    q
}

pub fn haar_unitary<R: Rng + ?Sized>(p: usize, rng: &mut R) -> ComplexMatrix {
    haar_columns(p, p, rng)
}

/// First `n` rows of a `p x p` Haar unitary.
pub fn haar_top_rows<R: Rng + ?Sized>(p: usize, n: usize, rng: &mut R) -> ComplexMatrix {
    haar_columns(p, n, rng).adjoint()
}

fn frame_sum<R: Rng + ?Sized>(frame: &[ComplexMatrix], rng: &mut R) -> ComplexMatrix {
    let n = frame[0].rows();
    let mut acc = ComplexMatrix::zeros(n, n);
    for v in frame {
        let g = complex_gaussian(rng);
        acc = &acc + &v.scale(g);
    }
    acc
}

/// One draw. `n_hint` sizes scalar inner draws inside `embed_rotate`.
pub fn draw<R: Rng + ?Sized>(spec: &EnsembleSpec, n_hint: usize, rng: &mut R) -> Input {
    match spec {
        EnsembleSpec::Rademacher => Input::Scalar(if rng.random::<bool>() { 1.0 } else { -1.0 }),
        EnsembleSpec::HaarUnitary { p } => Input::Matrix(haar_unitary(*p, rng)),
        EnsembleSpec::GaussianFrame { frame } => Input::Matrix(frame_sum(frame, rng)),
        EnsembleSpec::WignerGue { n } => Input::Matrix(ginibre(*n, *n, 1.0 / *n as f64, rng)),
        EnsembleSpec::EmbedRotate { inner, p } => {
            let n = inner.output_dim().unwrap_or(n_hint);
            let g = inner_matrix(inner, n, rng);
            let h = haar_unitary(*p, rng);
            Input::Matrix(g.pad_to(*p, *p).matmul(&h))
        }
    }
}

fn inner_matrix<R: Rng + ?Sized>(inner: &EnsembleSpec, n: usize, rng: &mut R) -> ComplexMatrix {
    match draw(inner, n, rng) {
        Input::Scalar(b) => ComplexMatrix::scalar_identity(n, C64::new(b, 0.0)),
        Input::Matrix(g) => g,
    }
}

/// Draw from a stream; the stream's own generator is used from its start.
pub fn sample(spec: &EnsembleSpec, n_hint: usize, stream: RngStream) -> Input {
    draw(spec, n_hint, &mut stream.rng())
}

/// Top `n x p` blocks `T_i = G_i R_i` of `m` independent `embed_rotate`
/// draws `iota(G_i) H_i`, where `R_i` is the first `n` rows of `H_i`. All
/// inner draws precede all Haar draws, so for fixed randomness the `G_i` do
/// not depend on `p`.
pub fn draw_rotated_tops<R: Rng + ?Sized>(
    inners: &[&EnsembleSpec],
    n: usize,
    p: usize,
    rng: &mut R,
) -> Vec<ComplexMatrix> {
    let gs: Vec<ComplexMatrix> = inners.iter().map(|s| inner_matrix(s, n, rng)).collect();
    gs.into_iter().map(|g| g.matmul(&haar_top_rows(p, n, rng))).collect()
}

/// Operator norm of the Monte Carlo mean of `(G G*)^K`, with the Frobenius
/// norm of the entrywise standard errors as its error bar.
pub fn check_moment_bound(
    spec: &EnsembleSpec,
    k: u32,
    n_hint: usize,
    samples: usize,
    stream: RngStream,
) -> Result<MCEstimate> {
    if k == 0 {
        return invalid("K must be at least 1");
    }
    if samples == 0 {
        return invalid("need at least one sample");
    }
    spec.validate()?;
    let n = spec.output_dim().unwrap_or(n_hint);
    let mut acc = MatrixWelford::new(n, n);
    for_each_sample(
        samples,
        stream,
        |_, s| {
            let g = inner_matrix(spec, n, &mut s.rng());
            g.gram().pow(k)
        },
        |x| acc.push(&x),
    );
    let mean = acc.mean();
    Ok(MCEstimate {
        label: format!("||E (G G*)^{k}|| [{}]", spec.name()),
        mean: op_norm(&mean)?,
        stderr: acc.stderr_frobenius(),
        samples,
        seed: stream.master_seed,
        stream_index: stream.stream_index,
    })
}

fn check_psd(a: &ComplexMatrix, name: &str) -> Result<()> {
    if !is_hermitian(a) {
        return invalid(format!("{name} must be Hermitian"));
    }
    let w = hermitian_eigenvalues(a);
    let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if w.iter().any(|&x| x < -1e-10 * scale.max(1.0)) {
        return invalid(format!("{name} must be positive semidefinite"));
    }
    Ok(())
}

/// Monte Carlo estimate of `E ||iota(A) H iota(B)||^2` for `p x p` Haar `H`.
pub fn haar_block_damping_check(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    p: usize,
    samples: usize,
    stream: RngStream,
) -> Result<MCEstimate> {
    check_psd(a, "A")?;
    check_psd(b, "B")?;
    let n = a.rows();
    if b.rows() != n {
        return invalid("A and B must have the same size");
    }
    if p < n {
        return invalid(format!("p = {p} must be at least n = {n}"));
    }
    // iota(A) H iota(B) only sees the top-left n x n block of H.
    Ok(mc_mean(&format!("E||i(A) H i(B)||^2 [p={p}]"), samples, stream, |s| {
        let block = haar_columns(p, n, &mut s.rng()).submatrix(0, 0, n, n);
        let x = a.matmul(&block).matmul(b);
        op_norm(&x).expect("finite").powi(2)
    }))
}
