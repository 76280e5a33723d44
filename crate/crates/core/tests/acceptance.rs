//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Oracles here are written independently of
//! the library code paths they check.

use std::f64::consts::{FRAC_PI_4, PI};
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ncmaj_core::ensembles::{ginibre, standard_basis_frame, EnsembleSpec};
use ncmaj_core::estimators::{trace_moment_boolean_exact, trace_moment_mc, TraceNorm};
use ncmaj_core::lab::{self, kd_limit, ExperimentReport, Verdict};
use ncmaj_core::linalg::{singular_values, ComplexMatrix, Tensor4, C64};
use ncmaj_core::ncgi::{
    estimate_kd, opt_symmetric_ascent, opt_unitary_ascent, psd_variant_solve, random_psd_tensor, round_relaxation,
    AscentOptions, PsdBlockInstance, MONOTONE_TOL,
};
use ncmaj_core::{CubeFunction, NCPoly, RngStream};
use rand::Rng;
use serde_json::{json, Value};

const SEED: u64 = 20_240_917;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run(name: &str, params: Value) -> Result<ExperimentReport, String> {
    lab::run_experiment(name, &params, SEED).map_err(|e| format!("{name}: {e}"))
}

fn hard_ok(r: &ExperimentReport, names: &[&str]) -> Result<(), String> {
    for n in names {
        let c = r.check(n).ok_or_else(|| format!("{}: missing check '{n}'", r.experiment))?;
        ensure(c.passed, format!("{}: '{n}' failed ({})", r.experiment, c.detail))?;
    }
    Ok(())
}

fn num(r: &ExperimentReport, label: &str) -> Result<f64, String> {
    r.result(label).map(|x| x.number()).ok_or_else(|| format!("{}: missing result '{label}'", r.experiment))
}

// Independent oracles -------------------------------------------------------

fn chi(mask: u32, t: u32) -> f64 {
    if (mask & t).count_ones() % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

fn dm(a: &ComplexMatrix) -> DMatrix<C64> {
    let n = a.rows();
    DMatrix::from_fn(n, a.cols(), |i, j| a.get(i, j))
}

/// `E_b Tr((Q Q*)^K)` by direct summation over sign patterns.
fn boolean_moment_oracle(q: &NCPoly, k: u32) -> f64 {
    let (m, n) = (q.m(), q.n());
    let mut total = 0.0;
    for t in 0u32..1 << m {
        let mut v = DMatrix::<C64>::zeros(n, n);
        for (&s, c) in q.coeffs() {
            v += dm(c) * C64::new(chi(s, t), 0.0);
        }
        let g = &v * v.adjoint();
        let mut p = DMatrix::<C64>::identity(n, n);
        for _ in 0..k {
            p = &p * &g;
        }
        total += p.trace().re;
    }
    total / (1u64 << m) as f64
}

fn nuclear_2x2(c: &DMatrix<C64>) -> f64 {
    let fro: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
    (fro + 2.0 * det.norm()).sqrt()
}

fn su2(theta: f64, alpha: f64, beta: f64) -> DMatrix<C64> {
    let a = C64::from_polar(theta.cos(), alpha);
    let b = C64::from_polar(theta.sin(), beta);
    DMatrix::from_row_slice(2, 2, &[a, -b.conj(), b, a.conj()])
}

/// `max_Y Re Tr(M (X (x) conj Y))` for fixed `X`: the trace norm of `C_kl = sum_ij M[(i,k),(j,l)] X_ji`.
fn best_over_y(m: &Tensor4, x: &DMatrix<C64>) -> f64 {
    let mut c = DMatrix::<C64>::zeros(2, 2);
    for k in 0..2 {
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    c[(k, l)] += m.matrix().get(i * 2 + k, j * 2 + l) * x[(j, i)];
                }
            }
        }
    }
    nuclear_2x2(&c)
}

/// Brute force over SU(2) (a global phase of X is absorbed by Y), grid plus pattern-search zoom.
fn grid_oracle(m: &Tensor4) -> f64 {
    let f = |p: &[f64; 3]| best_over_y(m, &su2(p[0], p[1], p[2]));
    let (nt, na) = (24, 48);
    let mut pts: Vec<(f64, [f64; 3])> = Vec::new();
    for it in 0..=nt {
        for ia in 0..na {
            for ib in 0..na {
                let p = [
                    it as f64 / nt as f64 * PI / 2.0,
                    ia as f64 / na as f64 * 2.0 * PI,
                    ib as f64 / na as f64 * 2.0 * PI,
                ];
                pts.push((f(&p), p));
            }
        }
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = pts[0].0;
    for &(v0, p0) in pts.iter().take(8) {
        let (mut v, mut p) = (v0, p0);
        let mut step = 2.0 * PI / na as f64;
        while step > 1e-10 {
            let mut moved = false;
            for d in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut q = p;
                    q[d] += s * step;
                    let w = f(&q);
                    if w > v {
                        (v, p, moved) = (w, q, true);
                    }
                }
            }
            if !moved {
                step /= 2.0;
            }
        }
        best = best.max(v);
    }
    best
}

// Criteria ------------------------------------------------------------------

fn c1() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in [2usize, 3, 5, 10] {
        let w = C64::new(1.0 / (m as f64).sqrt(), 0.0);
        let q = NCPoly::new(m, 1, (0..m).map(|i| (1u32 << i, ComplexMatrix::scalar_identity(1, w))).collect())
            .map_err(|e| e.to_string())?;
        let v = trace_moment_boolean_exact(&q, 2, TraceNorm::Normalized).map_err(|e| e.to_string())?;
        let want = 3.0 - 2.0 / m as f64;
        ensure((v - want).abs() <= 1e-12, format!("m={m}: {v} vs {want}"))?;
        ensure((boolean_moment_oracle(&q, 2) - want).abs() <= 1e-12, format!("m={m}: oracle disagrees"))?;
        worst = worst.max((v - want).abs());
    }
    Ok(format!("max |E - (3 - 2/m)| = {worst:.1e}"))
}

fn c2() -> Outcome {
    let r = run("counterexample-wigner", json!({"m": 5, "n": 200, "samples": 200, "tolerance": 0.1}))?;
    hard_ok(&r, &["wigner near semicircle value 2"])?;
    let e = r.result("wigner (1/n) E Tr|Q|^4").unwrap();
    Ok(format!("estimate {:.4} +- {:.4}", e.number(), e.stderr.unwrap()))
}

fn c3() -> Outcome {
    let r = run("counterexample-cyclic", json!({"n": 8, "samples": 10_000}))?;
    hard_ok(&r, &["boolean side equals n exactly", "haar within 3 stderr of 2n - 1", "C_j C_k = 0 for j != k"])?;
    let b = num(&r, "boolean E Tr|Q|^4")?;
    ensure(b == 8.0, format!("boolean side {b}"))?;
    let e = r.result("haar E Tr|Q|^4").unwrap();
    Ok(format!("boolean {b}, haar {:.4} +- {:.4} vs 15", e.number(), e.stderr.unwrap()))
}

fn c4() -> Outcome {
    let mut rng = RngStream::new(SEED, 4).rng();
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let m = rng.random_range(1..=6usize);
        let n = rng.random_range(1..=3usize);
        let values: Vec<ComplexMatrix> = (0..1u32 << m).map(|_| ginibre(n, n, 1.0, &mut rng)).collect();
        let f = CubeFunction::fourier_transform(m, &values).map_err(|e| e.to_string())?;
        // Oracle transform: 2^-m sum_t chi_S(t) f(t).
        for s in 0u32..1 << m {
            let mut c = DMatrix::<C64>::zeros(n, n);
            for (t, v) in values.iter().enumerate() {
                c += dm(v) * C64::new(chi(s, t as u32), 0.0);
            }
            c /= C64::new((1u64 << m) as f64, 0.0);
            let d = (c - dm(&f.coeff(s))).iter().map(|z| z.norm()).fold(0.0, f64::max);
            worst = worst.max(d);
        }
        let back = f.values_table().map_err(|e| e.to_string())?;
        for (a, b) in back.iter().zip(&values) {
            worst = worst.max(a.max_abs_diff(b));
        }
        let pointwise: f64 = values.iter().map(|v| v.frob_norm_sq()).sum::<f64>() / (1u64 << m) as f64;
        worst = worst.max((pointwise - f.plancherel_mass()).abs() / (1.0 + pointwise));
        ensure(worst <= 1e-9, format!("case {case}: deviation {worst:.3e}"))?;
    }
    Ok(format!("100 cases, max deviation {worst:.2e}"))
}

fn c5() -> Outcome {
    let mut rng = RngStream::new(SEED, 5).rng();
    let mut worst_z: f64 = 0.0;
    for inst in 0..20 {
        let n = rng.random_range(1..=3usize);
        let m = rng.random_range(2..=6usize);
        let d = rng.random_range(1..=m.min(3));
        let q = lab::random_poly(m, n, d, false, &mut rng).map_err(|e| e.to_string())?;
        let specs: Vec<EnsembleSpec> = (0..m)
            .map(|_| match rng.random_range(0..3) {
                0 => EnsembleSpec::Rademacher,
                1 => EnsembleSpec::HaarUnitary { p: n },
                _ => EnsembleSpec::gaussian_frame(standard_basis_frame(n)).unwrap(),
            })
            .collect();
        let exact = boolean_moment_oracle(&q, 1);
        let e = trace_moment_mc(&q, &specs, 1, 10_000, RngStream::new(SEED, 500 + inst), TraceNorm::Raw)
            .map_err(|e| e.to_string())?;
        let z = (e.mean - exact).abs() / e.stderr.max(1e-300);
        ensure(e.within(exact, 3.0) || (e.mean - exact).abs() <= 1e-12, format!("instance {inst}: {} vs {exact} ({z:.2} sigma)", e.mean))?;
        worst_z = worst_z.max(z);
    }
    Ok(format!("20 instances, worst |z| = {worst_z:.2}"))
}

fn hyper_report() -> Result<ExperimentReport, String> {
    run("hyper", json!({"instances": 50, "n": 2, "m_max": 8, "d_max": 3, "ks": [2, 3], "samples": 4000, "mixed_k": 2}))
}

fn c6() -> Outcome {
    let r = hyper_report()?;
    hard_ok(&r, &["boolean bound (2K-1)^{dK} (Tr|Q|^2)^K"])?;
    let p: lab::HyperParams = serde_json::from_value(r.params.clone()).unwrap();
    let mut checked = 0;
    for i in 0..p.instances {
        let (_, d, q) = lab::hyper_instance(&p, SEED, i).map_err(|e| e.to_string())?;
        let two = boolean_moment_oracle(&q, 1);
        for &k in &p.ks {
            let hi = boolean_moment_oracle(&q, k);
            let bound = f64::from(2 * k - 1).powi((d as u32 * k) as i32) * two.powi(k as i32);
            ensure(hi <= bound * (1.0 + 1e-12), format!("instance {i} K={k}: {hi} > {bound}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} instance-K pairs, zero violations, max ratio {:.3}", num(&r, "largest boolean moment / bound")?))
}

fn c7() -> Outcome {
    let r = hyper_report()?;
    hard_ok(&r, &["frame bound (2K-1)^{dK} (K!)^d (Tr|Q|^2)^K + 3 stderr", "mixed-input bound, first 2 inputs frame"])?;
    Ok("100 instance-K pairs, zero violations (frame and mixed)".into())
}

fn c8() -> Outcome {
    let r = run(
        "majorize",
        json!({"family": "spread", "m": 16, "n": 2, "d": 1, "ks": [2], "p_grid": [64, 128, 256], "samples": 10_000, "c2": 2.0}),
    )?;
    let tau = num(&r, "tau")?;
    ensure((tau - 2.0 / 16.0).abs() < 1e-12, format!("tau = {tau}"))?;
    hard_ok(&r, &["K=2 lhs <= rhs + slack + 3 stderr at every p", "K=2 residual non-increasing as p grows"])?;
    let res: Vec<String> = r.tables[0].rows.iter().map(|row| format!("{:.4}", row[5])).collect();
    Ok(format!("rhs {:.4}, residuals over p=64,128,256: {}", num(&r, "K=2 boolean rhs")?, res.join(", ")))
}

fn c9() -> Outcome {
    let h = run("ensemble-check", json!({"kind": "haar", "n": 4, "ks": [2], "samples": 20_000, "damping_p": []}))?;
    hard_ok(&h, &["c_2 = 1"])?;
    let mut parts = vec![format!("haar c2 {:.15}", num(&h, "c_2 = ||E (G G*)^2||")?)];
    for n in [1usize, 4] {
        let f = run("ensemble-check", json!({"kind": "frame", "n": n, "ks": [2, 3], "samples": 20_000, "damping_p": []}))?;
        hard_ok(&f, &["c_2 <= 2! + 3 stderr", "c_3 <= 3! + 3 stderr"])?;
        parts.push(format!(
            "frame n={n} c2 {:.4} c3 {:.4}",
            num(&f, "c_2 = ||E (G G*)^2||")?,
            num(&f, "c_3 = ||E (G G*)^3||")?
        ));
    }
    Ok(parts.join(", "))
}

fn c10() -> Outcome {
    let r = run("ensemble-check", json!({"kind": "haar", "n": 2, "ks": [2], "samples": 20_000, "damping_p": [8, 32], "damping_n": 2}))?;
    hard_ok(&r, &["damping p=8 <= n^2/p + 3 stderr", "damping p=32 <= n^2/p + 3 stderr"])?;
    Ok(format!(
        "p=8: {:.4} <= 0.5, p=32: {:.4} <= 0.125",
        num(&r, "E||iota(I) H iota(I)||^2, p=8")?,
        num(&r, "E||iota(I) H iota(I)||^2, p=32")?
    ))
}

fn c11() -> Outcome {
    let r = run("kd-estimate", json!({"d": 1, "samples": 1_000_000}))?;
    hard_ok(&r, &["K(1) within 3 stderr of pi/4"])?;
    // Oracle for the limit constant: (8 / (3 pi))^2 written out.
    ensure((kd_limit() - 64.0 / (9.0 * PI * PI)).abs() < 1e-15, "limit constant")?;
    let k32 = estimate_kd(32, 20_000, RngStream::new(SEED, 11)).map_err(|e| e.to_string())?;
    ensure((k32.mean - kd_limit()).abs() <= 0.02, format!("K(32) = {:.5}", k32.mean))?;
    // Independent check of one sample: sum of singular values via the Gram eigenvalues.
    let g = ginibre(4, 4, 0.25, &mut RngStream::new(SEED, 12).rng());
    let eig = (dm(&g).adjoint() * dm(&g)).symmetric_eigenvalues();
    let nuc: f64 = eig.iter().map(|x| x.max(0.0).sqrt()).sum();
    let ours: f64 = singular_values(&g).map_err(|e| e.to_string())?.iter().sum();
    ensure((nuc - ours).abs() < 1e-10, "singular value sum")?;
    Ok(format!("K(1) {:.5} vs {FRAC_PI_4:.5}, K(32) {:.5} vs {:.5}", num(&r, "K(1)")?, k32.mean, kd_limit()))
}

fn c12() -> Outcome {
    let r = run("dict-test", json!({"instances": 20, "n": 2, "big_n": 3, "factors": 2, "m": 5}))?;
    hard_ok(&r, &["OBJ(dictator) = Tr((V . V) M), both routes", "Fourier and B(f) routes agree on random f, h"])?;
    Ok(format!("max deviation {:.2e}", num(&r, "largest completeness deviation")?))
}

fn c13() -> Outcome {
    let opts = AscentOptions { restarts: 20, max_iters: 1000, tol: 1e-10 };
    let mut worst: f64 = 0.0;
    let mut rng = RngStream::new(SEED, 13).rng();
    for i in 0..20u64 {
        let n = 1 + (i as usize % 3);
        let factors = rng.random_range(1..=3usize);
        let m = random_psd_tensor(n, factors, &mut rng).map_err(|e| e.to_string())?;
        let free = opt_unitary_ascent(&m, &opts, RngStream::new(SEED, 1300 + i)).map_err(|e| e.to_string())?;
        let sym = opt_symmetric_ascent(&m, &opts, RngStream::new(SEED, 1400 + i)).map_err(|e| e.to_string())?;
        ensure(free.max_decrease <= MONOTONE_TOL && sym.max_decrease <= MONOTONE_TOL, format!("instance {i}: non-monotone"))?;
        let gap = (free.value - sym.value).abs();
        ensure(gap <= 1e-6, format!("instance {i}: free {} vs symmetric {}", free.value, sym.value))?;
        worst = worst.max(gap);
    }
    Ok(format!("20 instances, max gap {worst:.2e}"))
}

fn c14() -> Outcome {
    let opts = AscentOptions { restarts: 20, max_iters: 1000, tol: 1e-12 };
    let mut rng = RngStream::new(SEED, 14).rng();
    let mut worst_rel: f64 = 0.0;
    let mut worst_drop: f64 = 0.0;
    for i in 0..5u64 {
        let m = Tensor4::from_matrix(ginibre(4, 4, 1.0, &mut rng)).map_err(|e| e.to_string())?;
        let asc = opt_unitary_ascent(&m, &opts, RngStream::new(SEED, 1500 + i)).map_err(|e| e.to_string())?;
        let oracle = grid_oracle(&m);
        let rel = (asc.value - oracle).abs() / oracle;
        ensure(rel <= 1e-3, format!("instance {i}: ascent {} vs grid {oracle}", asc.value))?;
        ensure(asc.max_decrease <= MONOTONE_TOL, format!("instance {i}: decrease {:.3e}", asc.max_decrease))?;
        worst_rel = worst_rel.max(rel);
        worst_drop = worst_drop.max(asc.max_decrease);
    }
    Ok(format!("5 instances, max relative gap {worst_rel:.2e}, max decrease {worst_drop:.1e}"))
}

fn c15() -> Outcome {
    let opts = AscentOptions { restarts: 10, max_iters: 1000, tol: 1e-10 };
    let mut rng = RngStream::new(SEED, 15).rng();
    let mut min_margin = f64::INFINITY;
    for i in 0..20u64 {
        let n = rng.random_range(2..=4usize);
        let d = rng.random_range(1..=3usize);
        let rank = rng.random_range(1..=n * d);
        let inst = PsdBlockInstance::random(n, d, rank, &mut rng).map_err(|e| e.to_string())?;
        let stream = RngStream::new(SEED, 1600 + i);
        let con = psd_variant_solve(&inst, true, &opts, stream).map_err(|e| e.to_string())?;
        let rel = psd_variant_solve(&inst, false, &opts, stream).map_err(|e| e.to_string())?;
        let rounded = round_relaxation(&inst, &rel.blocks, 100, stream.substream(1)).map_err(|e| e.to_string())?;
        ensure(rel.value >= con.value - MONOTONE_TOL, format!("instance {i}: relaxed {} < constrained {}", rel.value, con.value))?;
        ensure(
            con.value >= rounded.mean - MONOTONE_TOL,
            format!("instance {i}: constrained {} < rounded mean {}", con.value, rounded.mean),
        )?;
        ensure(
            con.max_decrease.max(rel.max_decrease) <= MONOTONE_TOL,
            format!("instance {i} (n={n} d={d} rank={rank}): decreases {:.3e} / {:.3e}, values {} / {}", con.max_decrease, rel.max_decrease, con.value, rel.value),
        )?;
        min_margin = min_margin.min(con.value - rounded.mean);
    }
    Ok(format!("20 instances, min constrained - rounded mean {min_margin:.3e}"))
}

fn c16() -> Outcome {
    let d = run("chop", json!({"family": "dictator", "m": 4, "n": 2, "rho": 0.9, "p_grid": [64, 256], "samples": 4000}))?;
    hard_ok(&d, &["distance positive", "distance non-increasing in p"])?;
    let low = run("chop", json!({"family": "random", "m": 10, "n": 2, "d": 2, "rho": 0.9, "p_grid": [64, 256], "samples": 4000}))?;
    hard_ok(&low, &["distance <= bound + 3 stderr at every p"])?;
    Ok(format!(
        "dictator {:.5} -> {:.5}; low-influence (tau {:.3}) {:.2e} <= {:.3}",
        num(&d, "p=64 distance")?,
        num(&d, "p=256 distance")?,
        num(&low, "tau")?,
        num(&low, "p=256 distance")?,
        num(&low, "bound 10 n^(1/2) tau^((1-rho)/(30 c2 c3))")?
    ))
}

fn c17() -> Outcome {
    let cases = [
        ("counterexample-cyclic", json!({"n": 4, "samples": 500})),
        ("majorize", json!({"samples": 300, "p_grid": [8, 16]})),
        ("chop", json!({"samples": 300})),
        ("noise-stability", json!({"samples": 300})),
        ("anticoncentration", json!({"samples": 300})),
        ("ncgi-opt", json!({"restarts": 4})),
        ("psd-variant", json!({"restarts": 4, "rounding_draws": 10})),
        ("dict-test", json!({"instances": 3})),
        ("kd-estimate", json!({"d": 3, "samples": 3000})),
        ("ensemble-check", json!({"kind": "frame", "samples": 500})),
        ("hyper", json!({"instances": 3, "samples": 300})),
        ("counterexample-wigner", json!({"n": 50, "samples": 10})),
    ];
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().map_err(|e| e.to_string())?;
    for (name, params) in cases {
        let a = lab::run_experiment(name, &params, SEED).map_err(|e| e.to_string())?;
        let b = pool.install(|| lab::run_experiment(name, &params, SEED)).map_err(|e| e.to_string())?;
        let (sa, sb) = (serde_json::to_string(&a.reproducible_json()).unwrap(), serde_json::to_string(&b.reproducible_json()).unwrap());
        ensure(sa == sb, format!("{name}: reports differ between runs"))?;
        ensure(a.verdict != Verdict::Fail || name == "ensemble-check", format!("{name}: unexpected failure"))?;
    }
    Ok("12 experiments byte-identical across reruns and worker counts".into())
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 17] = [
        ("boolean counterexample 3 - 2/m", 1, c1),
        ("wigner fourth moment near 2", 120, c2),
        ("cyclic example: boolean n, haar 2n - 1", 120, c3),
        ("plancherel and transform round trips", 10, c4),
        ("second-moment invariance, mixed ensembles", 300, c5),
        ("boolean hypercontractivity", 120, c6),
        ("frame hypercontractivity", 600, c7),
        ("fourth-moment majorization sweep", 1200, c8),
        ("ensemble constants c_K", 300, c9),
        ("haar damping n^2/p", 60, c10),
        ("K(d) constants", 300, c11),
        ("dictatorship completeness", 60, c12),
        ("PSD symmetric equality", 300, c13),
        ("ascent soundness vs SU(2) grid", 600, c14),
        ("relaxation dominance", 300, c15),
        ("chop distance", 600, c16),
        ("reproducibility", 600, c17),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let out = std::io::stdout();
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let res = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let res = match res {
            Ok(msg) if took > Duration::from_secs(*budget) => Err(format!("{msg}; over budget {budget}s")),
            r => r,
        };
        let (tag, msg) = match &res {
            Ok(m) => ("PASS", m.clone()),
            Err(m) => {
                failed += 1;
                ("FAIL", m.clone())
            }
        };
        writeln!(out.lock(), "criterion {id:>2} {tag} [{:.1}s] {name}: {msg}", took.as_secs_f64()).unwrap();
    }
    writeln!(out.lock(), "acceptance: {failed} failed").unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
