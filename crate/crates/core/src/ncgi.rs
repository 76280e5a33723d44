//! Noncommutative Grothendieck objectives: alternating polar ascent over
//! unitaries, the PSD block variant with its co-isometry relaxation and
//! rounding, `K(d)`, and the dictatorship-test objective.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{ginibre, haar_unitary};
use crate::error::{invalid, Error, Result};
use crate::fourier::{check_enumerable, CubeFunction, MAX_ENUM_VARS};
use crate::linalg::{
    hermitian_eigen, odot, op_norm, partial_trace_2, polar_maximizer, singular_values, unitarity_defect,
    unitary_polar_factor, ComplexMatrix, Tensor4, VectorMatrix, C64,
};
use crate::mc::{mc_mean, MCEstimate, RngStream};

/// Per-element unitarity tolerance of a [`UnitaryTuple`].
pub const UNITARY_TOL: f64 = 1e-9;
/// Relative PSD tolerance: smallest eigenvalue `>= -PSD_TOL * ||M||`.
pub const PSD_TOL: f64 = 1e-8;
/// Allowed drop of the objective across one block update.
pub const MONOTONE_TOL: f64 = 1e-12;
/// Tolerance on `V V* = V* V = I` for vector-valued unitaries.
pub const VECTOR_UNITARY_TOL: f64 = 1e-8;
/// Agreement required between the two dictatorship-objective routes.
pub const OBJ_ROUTE_TOL: f64 = 1e-9;
/// Consecutive small-gain sweeps before an ascent stops.
const STALL_SWEEPS: usize = 3;

/// Restart and stopping parameters shared by the ascent routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self { restarts: 20, max_iters: 1000, tol: 1e-10 }
    }
}

impl AscentOptions {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 {
            return invalid("restarts and max_iters must be positive");
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return invalid(format!("tol = {} must be finite and nonnegative", self.tol));
        }
        Ok(())
    }
}

/// Sweep bookkeeping: best value, stall counter, largest observed drop.
#[derive(Debug, Clone)]
struct Progress {
    value: f64,
    stall: usize,
    max_decrease: f64,
    sweeps: usize,
}

impl Progress {
    fn new(value: f64) -> Self {
        Self { value, stall: 0, max_decrease: 0.0, sweeps: 0 }
    }

    fn step(&mut self, new: f64) {
        self.max_decrease = self.max_decrease.max(self.value - new);
        self.value = new;
    }

    /// Record the end of a sweep that started at `start`; true when converged.
    fn end_sweep(&mut self, start: f64, tol: f64) -> bool {
        self.sweeps += 1;
        if self.value - start < tol * (1.0 + self.value.abs()) {
            self.stall += 1;
        } else {
            self.stall = 0;
        }
        self.stall >= STALL_SWEEPS
    }
}

/// Result of a multi-restart unitary ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentResult {
    pub value: f64,
    pub x: ComplexMatrix,
    pub y: ComplexMatrix,
    /// False when the best restart hit `max_iters` before the stopping rule.
    pub converged: bool,
    pub sweeps: usize,
    /// Largest drop of the objective across any block update of any restart.
    pub max_decrease: f64,
    pub restart_values: Vec<f64>,
}

/// `C[i,j] = sum_{k,l} P[(i,k),(j,l)] B[k,l]`.
fn contract_second(p: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let n = b.rows();
    ComplexMatrix::from_fn(n, n, |i, j| {
        let mut s = C64::new(0.0, 0.0);
        for k in 0..n {
            for l in 0..n {
                s += p.get(i * n + k, j * n + l) * b.get(k, l);
            }
        }
        s
    })
}

/// `D[k,l] = sum_{i,j} P[(i,k),(j,l)] A[i,j]`.
fn contract_first(p: &ComplexMatrix, a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.rows();
    ComplexMatrix::from_fn(n, n, |k, l| {
        let mut s = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                s += p.get(i * n + k, j * n + l) * a.get(i, j);
            }
        }
        s
    })
}

fn sum_entrywise(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    a.as_dmatrix().iter().zip(b.as_dmatrix().iter()).map(|(x, y)| x * y).sum()
}

/// `Tr(M (X (x) conj(Y)))`.
pub fn objective_complex(m: &Tensor4, x: &ComplexMatrix, y: &ComplexMatrix) -> Result<C64> {
    check_square_dim(x, m.n(), "X")?;
    check_square_dim(y, m.n(), "Y")?;
    Ok(m.matrix().trace_of_product(&x.kron(&y.conj())))
}

/// `Re Tr(M (X (x) conj(Y)))`.
pub fn objective(m: &Tensor4, x: &ComplexMatrix, y: &ComplexMatrix) -> Result<f64> {
    objective_complex(m, x, y).map(|z| z.re)
}

fn check_square_dim(a: &ComplexMatrix, n: usize, what: &str) -> Result<()> {
    if a.rows() != n || a.cols() != n {
        return invalid(format!("{what} must be {n}x{n}, got {}x{}", a.rows(), a.cols()));
    }
    Ok(())
}

/// The objective in entry form with `P = M^T`: linear in `X` with
/// coefficient `C_X`, conjugate-linear in `Y` with coefficient `D_Y`.
struct EntryForm {
    p: ComplexMatrix,
}

impl EntryForm {
    fn new(m: &Tensor4) -> Self {
        Self { p: m.matrix().transpose() }
    }

    /// `L` with `Tr(M (X (x) conj(Y))) = Tr(X L)`.
    fn x_coefficient(&self, y: &ComplexMatrix) -> ComplexMatrix {
        contract_second(&self.p, &y.conj()).transpose()
    }

    /// `L` with `Re Tr(M (X (x) conj(Y))) = Re Tr(Y L)`.
    fn y_coefficient(&self, x: &ComplexMatrix) -> ComplexMatrix {
        contract_first(&self.p, x).adjoint()
    }

    fn value(&self, x: &ComplexMatrix, y: &ComplexMatrix) -> f64 {
        sum_entrywise(&contract_second(&self.p, &y.conj()), x).re
    }
}

fn polar_step(l: &ComplexMatrix) -> ComplexMatrix {
    polar_maximizer(l).expect("finite coefficient matrix").0
}

struct RestartOutcome {
    value: f64,
    x: ComplexMatrix,
    y: ComplexMatrix,
    converged: bool,
    sweeps: usize,
    max_decrease: f64,
}

fn best_of(outcomes: Vec<RestartOutcome>) -> AscentResult {
    let restart_values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let max_decrease = outcomes.iter().map(|o| o.max_decrease).fold(0.0, f64::max);
    let best = outcomes
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one restart");
    AscentResult {
        value: best.value,
        x: best.x,
        y: best.y,
        converged: best.converged,
        sweeps: best.sweeps,
        max_decrease,
        restart_values,
    }
}

fn run_restarts<F>(restarts: usize, stream: RngStream, f: F) -> Vec<RestartOutcome>
where
    F: Fn(RngStream) -> RestartOutcome + Sync,
{
    (0..restarts).into_par_iter().map(|r| f(stream.substream(r as u64))).collect()
}

/// Alternating polar ascent for `sup_{X,Y unitary} Re Tr(M (X (x) conj(Y)))`.
/// Each block update is the exact maximizer for the free variable, so the
/// objective never decreases; the result is a lower bound for the supremum.
pub fn opt_unitary_ascent(m: &Tensor4, opts: &AscentOptions, stream: RngStream) -> Result<AscentResult> {
    opts.validate()?;
    if !m.matrix().is_finite() {
        return invalid("tensor has non-finite entries");
    }
    let n = m.n();
    let form = EntryForm::new(m);
    let outcomes = run_restarts(opts.restarts, stream, |s| {
        let mut rng = s.rng();
        let mut x = haar_unitary(n, &mut rng);
        let mut y = haar_unitary(n, &mut rng);
        let mut prog = Progress::new(form.value(&x, &y));
        let mut converged = false;
        for _ in 0..opts.max_iters {
            let start = prog.value;
            x = polar_step(&form.x_coefficient(&y));
            prog.step(form.value(&x, &y));
            y = polar_step(&form.y_coefficient(&x));
            prog.step(form.value(&x, &y));
            if prog.end_sweep(start, opts.tol) {
                converged = true;
                break;
            }
        }
        RestartOutcome { value: prog.value, x, y, converged, sweeps: prog.sweeps, max_decrease: prog.max_decrease }
    });
    Ok(best_of(outcomes))
}

/// `sum_i |Tr(M_i X)|^2` for `M = sum_i M_i (x) conj(M_i)`.
pub fn symmetric_objective(factors: &[ComplexMatrix], x: &ComplexMatrix) -> f64 {
    factors.iter().map(|f| f.trace_of_product(x).norm_sqr()).sum()
}

/// Ascent for `sup_X Tr(M (X (x) conj(X)))` on a PSD tensor, using the
/// objective `sum_i |Tr(M_i X)|^2`. The objective is convex in `X`, so
/// maximizing its linearization at the current point never decreases it.
/// The result has `y == x`.
pub fn opt_symmetric_ascent(m: &Tensor4, opts: &AscentOptions, stream: RngStream) -> Result<AscentResult> {
    opts.validate()?;
    let factors = m
        .factors()
        .ok_or_else(|| Error::InvalidInput("symmetric ascent needs a PSD factorization".into()))?;
    let n = m.n();
    let outcomes = run_restarts(opts.restarts, stream, |s| {
        let mut rng = s.rng();
        let mut x = haar_unitary(n, &mut rng);
        let mut prog = Progress::new(symmetric_objective(factors, &x));
        let mut converged = false;
        for _ in 0..opts.max_iters {
            let start = prog.value;
            let mut l = ComplexMatrix::zeros(n, n);
            for f in factors {
                l = &l + &f.scale(f.trace_of_product(&x).conj());
            }
            if l.max_abs() == 0.0 {
                converged = true;
                break;
            }
            x = polar_step(&l);
            prog.step(symmetric_objective(factors, &x));
            if prog.end_sweep(start, opts.tol) {
                converged = true;
                break;
            }
        }
        RestartOutcome {
            value: prog.value,
            y: x.clone(),
            x,
            converged,
            sweeps: prog.sweeps,
            max_decrease: prog.max_decrease,
        }
    });
    Ok(best_of(outcomes))
}

/// `sum_i F_i (x) conj(F_i)` over `n x n` factors.
pub fn build_psd_tensor(n: usize, factors: Vec<ComplexMatrix>) -> Result<Tensor4> {
    Tensor4::from_psd_factors(n, factors)
}

/// Realignment `R[(i,j),(k,l)] = M[(i,k),(j,l)]`; `M` is PSD as a 4-tensor
/// iff `R` is a PSD matrix.
fn realign(m: &Tensor4) -> ComplexMatrix {
    let n = m.n();
    ComplexMatrix::from_fn(n * n, n * n, |r, c| {
        let (i, j, k, l) = (r / n, r % n, c / n, c % n);
        m.entry(i, j, k, l)
    })
}

/// Recover PSD factors of a dense tensor, rejecting non-PSD input.
pub fn factorize_psd_tensor(m: &Tensor4) -> Result<Tensor4> {
    let n = m.n();
    let eig = hermitian_eigen(&realign(m))
        .map_err(|e| Error::InvalidInput(format!("not PSD as a 4-tensor: realigned matrix is not Hermitian ({e})")))?;
    let scale = eig.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL * scale.max(f64::MIN_POSITIVE) {
        return invalid(format!("not PSD as a 4-tensor: smallest realigned eigenvalue {min:.3e}"));
    }
    let factors: Vec<ComplexMatrix> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > PSD_TOL * scale)
        .map(|(c, &v)| {
            let s = v.sqrt();
            ComplexMatrix::from_fn(n, n, |i, j| eig.vectors.get(i * n + j, c) * s)
        })
        .collect();
    Tensor4::from_psd_factors(n, factors)
}

/// Random PSD tensor `sum_i F_i (x) conj(F_i)` with Ginibre factors scaled
/// so that entries have variance `1 / (n^2 count)`.
pub fn random_psd_tensor<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Result<Tensor4> {
    let var = 1.0 / (n * n * count.max(1)) as f64;
    build_psd_tensor(n, (0..count).map(|_| ginibre(n, n, var, rng)).collect())
}

/// Matrices that are each unitary within [`UNITARY_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitaryTuple(Vec<ComplexMatrix>);

impl UnitaryTuple {
    pub fn new(items: Vec<ComplexMatrix>) -> Result<Self> {
        for (k, u) in items.iter().enumerate() {
            if !u.is_square() {
                return invalid(format!("element {k} is not square"));
            }
            let defect = unitarity_defect(u);
            if defect > UNITARY_TOL {
                return invalid(format!("element {k} is not unitary (defect {defect:.3e})"));
            }
        }
        Ok(Self(items))
    }

    pub fn items(&self) -> &[ComplexMatrix] {
        &self.0
    }

    pub fn into_items(self) -> Vec<ComplexMatrix> {
        self.0
    }
}

impl<'de> Deserialize<'de> for UnitaryTuple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let items = Vec::<ComplexMatrix>::deserialize(d)?;
        UnitaryTuple::new(items).map_err(serde::de::Error::custom)
    }
}

/// Hermitian PSD `nd x nd` matrix split into `d x d` blocks `M_ij`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdBlockInstance {
    n: usize,
    d: usize,
    matrix: ComplexMatrix,
}

impl PsdBlockInstance {
    pub fn new(n: usize, d: usize, matrix: ComplexMatrix) -> Result<Self> {
        if n == 0 || d == 0 {
            return invalid("block count and block size must be positive");
        }
        if matrix.rows() != n * d || matrix.cols() != n * d {
            return invalid(format!("matrix must be {0}x{0} for n = {n}, d = {d}", n * d));
        }
        let eig = hermitian_eigen(&matrix)?;
        let scale = eig.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL * scale {
            return invalid(format!("matrix is not PSD: smallest eigenvalue {min:.3e}"));
        }
        Ok(Self { n, d, matrix })
    }

    /// `B B*` for an `nd x r` complex Ginibre `B`, normalized to unit trace per block row.
    pub fn random<R: Rng + ?Sized>(n: usize, d: usize, rank: usize, rng: &mut R) -> Result<Self> {
        let b = ginibre(n * d, rank.max(1), 1.0 / (rank.max(1) * d) as f64, rng);
        let g = b.gram();
        let h = (&g + &g.adjoint()).scale_real(0.5);
        Self::new(n, d, h)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn block(&self, i: usize, j: usize) -> ComplexMatrix {
        self.matrix.submatrix(i * self.d, j * self.d, self.d, self.d)
    }

    fn transposed_blocks(&self) -> Vec<Vec<ComplexMatrix>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.block(i, j).transpose()).collect()).collect()
    }

    /// `sum_ij Re Tr(M_ij^T V_i V_j*)` for `d x k` blocks `V_i`.
    pub fn objective(&self, blocks: &[ComplexMatrix]) -> Result<f64> {
        if blocks.len() != self.n || blocks.iter().any(|v| v.rows() != self.d) {
            return invalid(format!("need {} blocks with {} rows", self.n, self.d));
        }
        let k = blocks[0].cols();
        if blocks.iter().any(|v| v.cols() != k) {
            return invalid("blocks must share a column count");
        }
        Ok(block_objective(&self.transposed_blocks(), blocks))
    }
}

impl<'de> Deserialize<'de> for PsdBlockInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            d: usize,
            matrix: ComplexMatrix,
        }
        let r = Raw::deserialize(d)?;
        PsdBlockInstance::new(r.n, r.d, r.matrix).map_err(serde::de::Error::custom)
    }
}

fn block_objective(mt: &[Vec<ComplexMatrix>], v: &[ComplexMatrix]) -> f64 {
    let mut s = 0.0;
    for (i, row) in mt.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            s += b.matmul(&v[i]).trace_of_product(&v[j].adjoint()).re;
        }
    }
    s
}

/// `L_i = sum_{j != i} V_j* M_ij^T`, so the `V_i`-dependent part is `2 Re Tr(V_i L_i)`.
fn block_coefficient(mt: &[Vec<ComplexMatrix>], v: &[ComplexMatrix], i: usize) -> ComplexMatrix {
    let (k, d) = (v[0].cols(), v[0].rows());
    let mut l = ComplexMatrix::zeros(k, d);
    for (j, vj) in v.iter().enumerate() {
        if j != i {
            l = &l + &vj.adjoint().matmul(&mt[i][j]);
        }
    }
    l
}

/// Solution of the PSD block problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdSolution {
    pub constrained: bool,
    pub value: f64,
    /// `d x d` unitaries (constrained) or `d x dn` co-isometries (relaxed).
    pub blocks: Vec<ComplexMatrix>,
    pub converged: bool,
    pub max_decrease: f64,
    pub restart_values: Vec<f64>,
}

fn block_ascent(
    mt: &[Vec<ComplexMatrix>],
    mut v: Vec<ComplexMatrix>,
    opts: &AscentOptions,
) -> (f64, Vec<ComplexMatrix>, bool, f64) {
    let mut prog = Progress::new(block_objective(mt, &v));
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let start = prog.value;
        for i in 0..v.len() {
            let l = block_coefficient(mt, &v, i);
            if l.max_abs() > 0.0 {
                v[i] = polar_step(&l);
            }
            prog.step(block_objective(mt, &v));
        }
        if prog.end_sweep(start, opts.tol) {
            converged = true;
            break;
        }
    }
    (prog.value, v, converged, prog.max_decrease)
}

/// `d x k` co-isometry from a Haar unitary of size `k`.
fn random_coisometry<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> ComplexMatrix {
    haar_unitary(k, rng).submatrix(0, 0, d, k)
}

struct BlockOutcome {
    value: f64,
    blocks: Vec<ComplexMatrix>,
    converged: bool,
    max_decrease: f64,
}

fn solve_blocks(
    inst: &PsdBlockInstance,
    width: usize,
    opts: &AscentOptions,
    stream: RngStream,
    warm: Option<Vec<ComplexMatrix>>,
) -> PsdSolution {
    let mt = inst.transposed_blocks();
    let (n, d) = (inst.n, inst.d);
    let run = |init: Vec<ComplexMatrix>| {
        let (value, blocks, converged, max_decrease) = block_ascent(&mt, init, opts);
        BlockOutcome { value, blocks, converged, max_decrease }
    };
    let mut outcomes: Vec<BlockOutcome> = warm.into_iter().map(&run).collect();
    outcomes.extend(
        (0..opts.restarts)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream.substream(r as u64).rng();
                run((0..n).map(|_| random_coisometry(d, width, &mut rng)).collect())
            })
            .collect::<Vec<_>>(),
    );
    let restart_values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let max_decrease = outcomes.iter().map(|o| o.max_decrease).fold(0.0, f64::max);
    let best = outcomes.into_iter().reduce(|a, b| if b.value > a.value { b } else { a }).expect("restarts");
    PsdSolution {
        constrained: width == d,
        value: best.value,
        blocks: best.blocks,
        converged: best.converged,
        max_decrease,
        restart_values,
    }
}

/// Block-coordinate polar ascent for the PSD block problem. The constrained
/// side optimizes over `d x d` unitaries; the relaxed side over `d x dn`
/// co-isometries, warm-started from the embedded constrained solution so
/// that with matched seeds the relaxed value dominates the constrained one.
pub fn psd_variant_solve(
    inst: &PsdBlockInstance,
    constrained: bool,
    opts: &AscentOptions,
    stream: RngStream,
) -> Result<PsdSolution> {
    opts.validate()?;
    let base = solve_blocks(inst, inst.d, opts, stream, None);
    if constrained {
        return Ok(base);
    }
    let width = inst.d * inst.n;
    let warm: Vec<ComplexMatrix> = base.blocks.iter().map(|x| x.pad_to(inst.d, width)).collect();
    Ok(solve_blocks(inst, width, opts, stream.substream(u64::MAX), Some(warm)))
}

/// Outcome of rounding a relaxed solution with shared Gaussian projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingReport {
    pub values: Vec<f64>,
    pub mean: f64,
    pub best: f64,
    pub best_tuple: UnitaryTuple,
    /// Draws rejected because some `V_i R` was numerically rank deficient.
    pub resamples: usize,
}

/// Smallest singular value below which a projected block counts as degenerate.
const ROUNDING_RANK_TOL: f64 = 1e-12;
const ROUNDING_RETRIES: usize = 16;

/// One rounding draw: `X_i = polar(V_i R)` with a shared `dn x d` Gaussian `R`.
pub fn round_once<R: Rng + ?Sized>(blocks: &[ComplexMatrix], rng: &mut R) -> Result<(UnitaryTuple, usize)> {
    let first = blocks.first().ok_or_else(|| Error::InvalidInput("need at least one block".into()))?;
    let (d, k) = (first.rows(), first.cols());
    if blocks.iter().any(|v| v.rows() != d || v.cols() != k) || k < d {
        return invalid("blocks must share a d x k shape with k >= d");
    }
    for (i, v) in blocks.iter().enumerate() {
        let defect = (&v.gram() - &ComplexMatrix::identity(d)).max_abs();
        if defect > 1e-8 {
            return invalid(format!("block {i} is not a co-isometry (defect {defect:.3e})"));
        }
    }
    for attempt in 0..ROUNDING_RETRIES {
        let r = ginibre(k, d, 1.0, rng);
        let projected: Vec<ComplexMatrix> = blocks.iter().map(|v| v.matmul(&r)).collect();
        let degenerate = projected
            .iter()
            .any(|a| singular_values(a).map(|s| s.last().copied().unwrap_or(0.0) < ROUNDING_RANK_TOL).unwrap_or(true));
        if degenerate {
            continue;
        }
        let xs = projected.iter().map(unitary_polar_factor).collect::<Result<Vec<_>>>()?;
        return Ok((UnitaryTuple::new(xs)?, attempt));
    }
    Err(Error::Numerical(format!("rounding stayed degenerate after {ROUNDING_RETRIES} draws")))
}

/// `draws` independent roundings of a relaxed solution of `inst`.
pub fn round_relaxation(
    inst: &PsdBlockInstance,
    blocks: &[ComplexMatrix],
    draws: usize,
    stream: RngStream,
) -> Result<RoundingReport> {
    if draws == 0 {
        return invalid("need at least one rounding draw");
    }
    inst.objective(blocks)?;
    let outs = (0..draws)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.substream(t as u64).rng();
            let (tuple, retries) = round_once(blocks, &mut rng)?;
            let v = inst.objective(tuple.items())?;
            Ok((v, tuple, retries))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = outs.iter().map(|o| o.0).collect();
    let resamples = outs.iter().map(|o| o.2).sum();
    let mean = values.iter().sum::<f64>() / draws as f64;
    let (best, best_tuple) = outs
        .into_iter()
        .map(|(v, t, _)| (v, t))
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("draws > 0");
    Ok(RoundingReport { values, mean, best, best_tuple, resamples })
}

/// `sqrt K(d)` estimate: mean of `(c/d) sum_i s_i(G)` over `d x d` complex
/// Gaussian `G` with entry variance `1/d`.
pub fn estimate_sqrt_kd(d: usize, scale: f64, samples: usize, stream: RngStream) -> Result<MCEstimate> {
    if d == 0 {
        return invalid("d must be at least 1");
    }
    if samples < 2 {
        return invalid("need at least two samples");
    }
    let label = format!("sqrt K({d})");
    Ok(mc_mean(&label, samples, stream, |s| {
        let mut rng = s.rng();
        let g = ginibre(d, d, 1.0 / d as f64, &mut rng);
        let total: f64 = if d == 1 { g.get(0, 0).norm() } else { singular_values(&g).expect("finite").iter().sum() };
        scale * total / d as f64
    }))
}

/// `K(d)` as the square of [`estimate_sqrt_kd`], with delta-method stderr.
pub fn estimate_kd(d: usize, samples: usize, stream: RngStream) -> Result<MCEstimate> {
    let s = estimate_sqrt_kd(d, 1.0, samples, stream)?;
    Ok(MCEstimate {
        label: format!("K({d})"),
        mean: s.mean * s.mean,
        stderr: 2.0 * s.mean.abs() * s.stderr,
        ..s
    })
}

/// Both evaluations of the dictatorship objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictObjective {
    /// `sum_{|S|=1} Tr((V . V) M (f(S) (x) conj(h(S))))`.
    pub fourier: C64,
    /// `E_sigma Tr(f(sigma) B(h)(sigma))`.
    pub operator: C64,
}

impl DictObjective {
    pub fn value(&self) -> f64 {
        self.fourier.re
    }

    pub fn route_gap(&self) -> f64 {
        (self.fourier - self.operator).norm()
    }
}

fn check_vector_unitary(v: &VectorMatrix, n: usize) -> Result<()> {
    if v.n() != n {
        return invalid(format!("V is {}x{} but the tensor has n = {n}", v.n(), v.n()));
    }
    let defect = v.unitarity_defect();
    if defect > VECTOR_UNITARY_TOL {
        return invalid(format!("V must satisfy V V* = V* V = I (defect {defect:.3e})"));
    }
    Ok(())
}

/// `B(h) = sum_{|S|=1} Tr_2((V . V) M (I (x) conj(h(S)))) W_S`.
pub fn b_operator(h: &CubeFunction, m: &Tensor4, v: &VectorMatrix) -> Result<CubeFunction> {
    let n = m.n();
    if h.n() != n {
        return invalid(format!("h has n = {} but the tensor has n = {n}", h.n()));
    }
    check_vector_unitary(v, n)?;
    let a = odot(v, v)?.matmul(m.matrix());
    let id = ComplexMatrix::identity(n);
    let coeffs = (0..h.m())
        .map(|i| {
            let s = 1u32 << i;
            let t = partial_trace_2(&a.matmul(&id.kron(&h.coeff(s).conj())))?;
            Ok((s, t))
        })
        .collect::<Result<_>>()?;
    CubeFunction::new(h.m(), n, coeffs)
}

/// Dictatorship-test objective `OBJ(f, h)` by its Fourier form and by the
/// `B(h)` operator form; errors if the routes disagree beyond [`OBJ_ROUTE_TOL`].
pub fn obj_dict_test(f: &CubeFunction, h: &CubeFunction, m: &Tensor4, v: &VectorMatrix) -> Result<DictObjective> {
    let n = m.n();
    if f.n() != n || h.n() != n || f.m() != h.m() {
        return invalid("f, h and M must share n, and f, h must share m");
    }
    check_vector_unitary(v, n)?;
    let a = odot(v, v)?.matmul(m.matrix());
    let fourier: C64 =
        (0..f.m()).map(|i| a.trace_of_product(&f.coeff(1 << i).kron(&h.coeff(1 << i).conj()))).sum();
    let b = b_operator(h, m, v)?;
    let operator = if f.m() <= MAX_ENUM_VARS {
        check_enumerable(f.m())?;
        let fv = f.values_table()?;
        let bv = b.values_table()?;
        let s: C64 = fv.iter().zip(&bv).map(|(x, y)| x.trace_of_product(y)).sum();
        s / (1u64 << f.m()) as f64
    } else {
        b.coeffs().iter().map(|(s, c)| f.coeff(*s).trace_of_product(c)).sum()
    };
    let out = DictObjective { fourier, operator };
    let scale = 1.0 + fourier.norm();
    if out.route_gap() > OBJ_ROUTE_TOL * scale {
        return Err(Error::Numerical(format!("objective routes disagree by {:.3e}", out.route_gap())));
    }
    Ok(out)
}

/// Embedded vector-valued unitary `V = (X, 0, ..., 0)` from the best symmetric
/// ascent solution `X`, so that `Tr((V . V) M)` approximates the symmetric optimum.
pub fn default_dict_vector(m: &Tensor4, big_n: usize, opts: &AscentOptions, stream: RngStream) -> Result<(VectorMatrix, f64)> {
    let sol = opt_symmetric_ascent(m, opts, stream)?;
    Ok((VectorMatrix::embedded_unitary(&sol.x, big_n)?, sol.value))
}

/// Options for [`ctau_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtauOptions {
    /// Number of cube variables of the searched functions.
    pub m: usize,
    pub restarts: usize,
    /// Hill-climbing proposals per restart.
    pub iters: usize,
}

impl Default for CtauOptions {
    fn default() -> Self {
        Self { m: 7, restarts: 8, iters: 150 }
    }
}

/// Best feasible dictatorship objective found for influence cap `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtauReport {
    pub tau: f64,
    /// Embedding dimension of the Gaussian form; the value does not depend on it
    /// because the Gaussian form equals `OBJ` analytically.
    pub p: usize,
    pub m: usize,
    /// Lower bound on `C_{tau,p}`.
    pub lower_bound: f64,
    pub source: String,
    pub max_influence: f64,
    pub sup_norm: f64,
    /// `Tr((V . V) M)`.
    pub completeness_value: f64,
    /// Ascent lower bound for `sup_{R,Z} Tr(M (R (x) conj(Z)))`.
    pub opt_value: f64,
}

impl CtauReport {
    /// Smallest `eps` with `lower_bound <= (1 + eps) * opt_value`.
    pub fn implied_eps(&self) -> f64 {
        if self.opt_value > 0.0 {
            (self.lower_bound / self.opt_value - 1.0).max(0.0)
        } else {
            0.0
        }
    }
}

/// Level-one objective `sum_i Re Tr(A (C_i (x) conj(C_i)))` and the feasibility
/// scale for coefficients `C_i`.
struct LevelOne<'a> {
    a: &'a ComplexMatrix,
    tau: f64,
    m: usize,
}

impl LevelOne<'_> {
    fn raw(&self, c: &[ComplexMatrix]) -> f64 {
        c.iter().map(|x| self.a.trace_of_product(&x.kron(&x.conj())).re).sum()
    }

    /// `sup_sigma ||sum sigma_i C_i||`, using the symmetry `sigma -> -sigma`.
    fn sup_norm(&self, c: &[ComplexMatrix]) -> f64 {
        let half = 1u32 << (self.m - 1);
        (0..half)
            .map(|t| {
                let mut s = c[self.m - 1].clone();
                for (i, ci) in c.iter().enumerate().take(self.m - 1) {
                    s = if t >> i & 1 == 1 { &s - ci } else { &s + ci };
                }
                op_norm(&s).expect("finite")
            })
            .fold(0.0, f64::max)
    }

    /// Largest `s <= ` feasibility with `||s f|| <= 1` and `Inf_i(s f) <= tau`.
    fn scale(&self, c: &[ComplexMatrix]) -> f64 {
        let sup = self.sup_norm(c);
        let inf = c.iter().map(ComplexMatrix::frob_norm_sq).fold(0.0, f64::max);
        if sup == 0.0 || inf == 0.0 {
            return 0.0;
        }
        (1.0 / sup).min((self.tau / inf).sqrt())
    }

    fn scaled_value(&self, c: &[ComplexMatrix]) -> f64 {
        let s = self.scale(c);
        s * s * self.raw(c)
    }
}

/// Level-one Fourier weights of majority on `k` (odd) variables.
fn majority_level_one(k: usize) -> f64 {
    // hat Maj({i}) = C(k-1, (k-1)/2) / 2^{k-1}
    let h = (k - 1) / 2;
    let mut c = 1.0f64;
    for j in 0..h {
        c *= (k - 1 - j) as f64 / (j + 1) as f64;
    }
    c / 2f64.powi((k - 1) as i32)
}

/// Heuristic lower bound on `C_{tau,p} = sup OBJ(f)` over `f` with
/// `||f(sigma)|| <= 1` and `max_i Inf_i f <= tau`. Candidates: a dictator
/// (when feasible), scaled majorities, and hill climbing over level-one
/// coefficients; only level-one mass enters the objective.
pub fn ctau_search(
    m_tensor: &Tensor4,
    v: &VectorMatrix,
    tau: f64,
    p: usize,
    opts: &CtauOptions,
    stream: RngStream,
) -> Result<CtauReport> {
    if !(tau > 0.0 && tau.is_finite()) {
        return invalid(format!("tau = {tau} must be positive"));
    }
    let n = m_tensor.n();
    if p < n {
        return invalid(format!("p = {p} must be at least n = {n}"));
    }
    if opts.m == 0 || opts.m > 16 || opts.restarts == 0 {
        return invalid("ctau search needs 1 <= m <= 16 and at least one restart");
    }
    check_vector_unitary(v, n)?;
    let a = odot(v, v)?.matmul(m_tensor.matrix());
    let completeness = a.trace().re;
    let lv = LevelOne { a: &a, tau, m: opts.m };
    let nf = n as f64;

    let mut cands: Vec<(String, Vec<ComplexMatrix>)> = Vec::new();
    let id = ComplexMatrix::identity(n);
    let zero = ComplexMatrix::zeros(n, n);
    let mut dict = vec![zero.clone(); opts.m];
    dict[0] = id.clone();
    cands.push(("dictator".into(), dict));
    for k in (1..=opts.m).step_by(2) {
        let w = majority_level_one(k);
        let mut c = vec![zero.clone(); opts.m];
        for ci in c.iter_mut().take(k) {
            *ci = id.scale_real(w);
        }
        cands.push((format!("majority level-one part, k={k}"), c));
    }

    let search: Vec<(f64, Vec<ComplexMatrix>)> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.substream(r as u64).rng();
            let mut c: Vec<ComplexMatrix> = (0..opts.m).map(|_| ginibre(n, n, 1.0, &mut rng)).collect();
            let mut best = lv.scaled_value(&c);
            let mut step = 0.5;
            for _ in 0..opts.iters {
                let i = rng.random_range(0..opts.m);
                let mut trial = c.clone();
                trial[i] = &trial[i] + &ginibre(n, n, step * step, &mut rng);
                let val = lv.scaled_value(&trial);
                if val > best {
                    best = val;
                    c = trial;
                    step *= 1.2;
                } else {
                    step *= 0.9;
                }
            }
            (best, c)
        })
        .collect();
    for (r, (_, c)) in search.into_iter().enumerate() {
        cands.push((format!("level-one hill climb, restart {r}"), c));
    }

    let mut best: Option<(f64, String, Vec<ComplexMatrix>, f64)> = None;
    for (name, c) in cands {
        // Majority's sup norm is exactly 1 even though its level-one part alone is not.
        let s = if name.starts_with("majority") {
            let k: usize = name.rsplit('=').next().and_then(|x| x.parse().ok()).unwrap_or(1);
            let inf = nf * majority_level_one(k);
            // Inf_i Maj_k = n * P(pivotal) = n * hat Maj({i}).
            (1.0f64).min((tau / inf).sqrt())
        } else {
            lv.scale(&c)
        };
        let val = s * s * lv.raw(&c);
        if best.as_ref().is_none_or(|b| val > b.0) {
            best = Some((val, name, c, s));
        }
    }
    let (lower_bound, source, c, s) = best.expect("candidates");
    let (max_influence, sup_norm) = if source.starts_with("majority") {
        let k: usize = source.rsplit('=').next().and_then(|x| x.parse().ok()).unwrap_or(1);
        (s * s * nf * majority_level_one(k), s)
    } else {
        let scaled: Vec<ComplexMatrix> = c.iter().map(|x| x.scale_real(s)).collect();
        (scaled.iter().map(ComplexMatrix::frob_norm_sq).fold(0.0, f64::max), lv.sup_norm(&scaled))
    };
    let opt = opt_unitary_ascent(m_tensor, &AscentOptions::default(), stream.substream(u64::MAX))?;
    Ok(CtauReport {
        tau,
        p,
        m: opts.m,
        lower_bound,
        source,
        max_influence,
        sup_norm,
        completeness_value: completeness,
        opt_value: opt.value,
    })
}

/// Options for [`ncgi_vector_ascent`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorAscentOptions {
    /// Dimension `N` of the vector entries.
    pub big_n: usize,
    pub iters: usize,
    /// Amplitude of the random perturbation added to the warm start.
    pub jitter: f64,
}

impl Default for VectorAscentOptions {
    fn default() -> Self {
        Self { big_n: 4, iters: 200, jitter: 0.1 }
    }
}

/// Non-certified lower bound for `sup_{U,V} Re Tr(M (U . V))` over
/// vector-valued unitaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorAscentResult {
    pub value: f64,
    pub u: VectorMatrix,
    pub v: VectorMatrix,
    /// Value of the unitary ascent used as the warm start.
    pub unitary_value: f64,
    /// Largest deviation of `U U*`, `U* U`, `V V*`, `V* V` from `I`.
    pub defect: f64,
}

const SINKHORN_TOL: f64 = 1e-10;
const SINKHORN_MAX: usize = 500;

/// `A^{-1/2}` for Hermitian positive definite `A`.
fn inv_sqrt(a: &ComplexMatrix) -> Option<ComplexMatrix> {
    let h = (a + &a.adjoint()).scale_real(0.5);
    let eig = hermitian_eigen(&h).ok()?;
    if eig.values.iter().any(|&x| x <= 1e-14) {
        return None;
    }
    let q = &eig.vectors;
    let n = q.rows();
    let scaled = ComplexMatrix::from_fn(n, n, |i, j| q.get(i, j) / eig.values[j].sqrt());
    Some(scaled.matmul(&q.adjoint()))
}

/// Alternately enforce `U U* = I` and `U* U = I`.
fn sinkhorn(u: &VectorMatrix) -> Option<VectorMatrix> {
    let mut cur = u.clone();
    for _ in 0..SINKHORN_MAX {
        if cur.unitarity_defect() < SINKHORN_TOL {
            return Some(cur);
        }
        let l = inv_sqrt(&cur.gram_left())?;
        let comps: Vec<ComplexMatrix> = cur.components().iter().map(|c| l.matmul(c)).collect();
        cur = VectorMatrix::new(comps).ok()?;
        let r = inv_sqrt(&cur.gram_right())?;
        let comps: Vec<ComplexMatrix> = cur.components().iter().map(|c| c.matmul(&r)).collect();
        cur = VectorMatrix::new(comps).ok()?;
    }
    (cur.unitarity_defect() < VECTOR_UNITARY_TOL).then_some(cur)
}

/// Heuristic ascent over vector-valued unitaries: gradient steps followed
/// by Sinkhorn-style alternating polar normalization, warm-started from the
/// embedded unitary optimum. Accepts only improving steps, so the value is
/// at least the unitary ascent value.
pub fn ncgi_vector_ascent(
    m: &Tensor4,
    asc: &AscentOptions,
    opts: &VectorAscentOptions,
    stream: RngStream,
) -> Result<VectorAscentResult> {
    if opts.big_n == 0 || !(opts.jitter >= 0.0) {
        return invalid("vector ascent needs N >= 1 and a nonnegative jitter");
    }
    let n = m.n();
    let base = opt_unitary_ascent(m, asc, stream)?;
    let form = EntryForm::new(m);
    let value = |u: &VectorMatrix, v: &VectorMatrix| -> f64 {
        u.components().iter().zip(v.components()).map(|(a, b)| form.value(a, b)).sum()
    };
    let mut u = VectorMatrix::embedded_unitary(&base.x, opts.big_n)?;
    let mut v = VectorMatrix::embedded_unitary(&base.y, opts.big_n)?;
    let mut best = value(&u, &v);
    let mut rng = stream.substream(u64::MAX).rng();
    if opts.jitter > 0.0 && opts.big_n > 1 {
        let perturb = |w: &VectorMatrix, rng: &mut rand_chacha::ChaCha20Rng| {
            let comps: Vec<ComplexMatrix> =
                w.components().iter().map(|c| c + &ginibre(n, n, opts.jitter * opts.jitter, rng)).collect();
            VectorMatrix::new(comps).ok().and_then(|x| sinkhorn(&x))
        };
        if let (Some(pu), Some(pv)) = (perturb(&u, &mut rng), perturb(&v, &mut rng)) {
            let val = value(&pu, &pv);
            if val > best {
                best = val;
            }
            // Start from the jittered point even when it is slightly worse, to
            // leave the embedded-unitary face; the best value so far is kept.
            u = pu;
            v = pv;
        }
    }
    let mut best_uv = (VectorMatrix::embedded_unitary(&base.x, opts.big_n)?, VectorMatrix::embedded_unitary(&base.y, opts.big_n)?);
    let mut cur = value(&u, &v);
    if cur >= best {
        best = cur;
        best_uv = (u.clone(), v.clone());
    }
    let mut eta = 0.5;
    for it in 0..opts.iters {
        let (tu, tv) = if it % 2 == 0 {
            let comps: Vec<ComplexMatrix> = u
                .components()
                .iter()
                .zip(v.components())
                .map(|(uc, vc)| uc + &contract_second(&form.p, &vc.conj()).conj().scale_real(eta))
                .collect();
            (VectorMatrix::new(comps).ok().and_then(|x| sinkhorn(&x)), Some(v.clone()))
        } else {
            let comps: Vec<ComplexMatrix> = u
                .components()
                .iter()
                .zip(v.components())
                .map(|(uc, vc)| vc + &contract_first(&form.p, uc).scale_real(eta))
                .collect();
            (Some(u.clone()), VectorMatrix::new(comps).ok().and_then(|x| sinkhorn(&x)))
        };
        match (tu, tv) {
            (Some(nu), Some(nv)) => {
                let val = value(&nu, &nv);
                if val > cur {
                    u = nu;
                    v = nv;
                    cur = val;
                    eta *= 1.1;
                    if cur > best {
                        best = cur;
                        best_uv = (u.clone(), v.clone());
                    }
                } else {
                    eta *= 0.5;
                }
            }
            _ => eta *= 0.5,
        }
        if eta < 1e-12 {
            break;
        }
    }
    let (u, v) = best_uv;
    let defect = u.unitarity_defect().max(v.unitarity_defect());
    Ok(VectorAscentResult { value: best, u, v, unitary_value: base.value, defect })
}
