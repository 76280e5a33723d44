use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ncmaj_bench::{dense_tensor, poly, psd_tensor, square};
use ncmaj_core::ensembles::{haar_unitary, standard_basis_frame, EnsembleSpec};
use ncmaj_core::estimators::{trace_moment_boolean_exact, trace_moment_mc, TraceNorm};
use ncmaj_core::linalg::{polar_maximizer, svd};
use ncmaj_core::ncgi::{estimate_kd, opt_symmetric_ascent, opt_unitary_ascent, AscentOptions};
use ncmaj_core::RngStream;

fn linalg(c: &mut Criterion) {
    let a = square(16);
    c.bench_function("svd 16x16", |b| b.iter(|| svd(black_box(&a)).unwrap()));
    c.bench_function("polar 16x16", |b| b.iter(|| polar_maximizer(black_box(&a)).unwrap()));
    let mut rng = RngStream::new(1, 0).rng();
    c.bench_function("haar unitary 32", |b| b.iter(|| haar_unitary(32, &mut rng)));
}

fn moments(c: &mut Criterion) {
    let q = poly(10, 2, 2);
    c.bench_function("boolean 4th moment m=10 n=2 d=2", |b| {
        b.iter(|| trace_moment_boolean_exact(black_box(&q), 2, TraceNorm::Normalized).unwrap())
    });
    let spec = EnsembleSpec::gaussian_frame(standard_basis_frame(2)).unwrap();
    c.bench_function("frame 4th moment 2000 samples", |b| {
        b.iter(|| trace_moment_mc(&q, std::slice::from_ref(&spec), 2, 2000, RngStream::new(1, 0), TraceNorm::Normalized).unwrap())
    });
    c.bench_function("K(8) 2000 samples", |b| b.iter(|| estimate_kd(8, 2000, RngStream::new(1, 0)).unwrap()));
}

fn ascent(c: &mut Criterion) {
    let opts = AscentOptions { restarts: 4, ..AscentOptions::default() };
    let dense = dense_tensor(3);
    let psd = psd_tensor(3, 2);
    c.bench_function("unitary ascent n=3, 4 restarts", |b| {
        b.iter(|| opt_unitary_ascent(black_box(&dense), &opts, RngStream::new(1, 0)).unwrap())
    });
    c.bench_function("symmetric ascent n=3, 4 restarts", |b| {
        b.iter(|| opt_symmetric_ascent(black_box(&psd), &opts, RngStream::new(1, 0)).unwrap())
    });
}

criterion_group!(benches, linalg, moments, ascent);
criterion_main!(benches);
