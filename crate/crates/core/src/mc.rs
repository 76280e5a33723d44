//! Seeded streams, one-pass accumulators, and order-deterministic parallel
//! Monte Carlo collection.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{ComplexMatrix, C64};

/// Samples evaluated per parallel batch; results are folded in sample order.
const BATCH: usize = 2048;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A reproducible random stream identified by `(master_seed, stream_index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self { master_seed, stream_index }
    }

    /// Child stream `k`; children of distinct parents or indices differ.
    pub fn substream(&self, k: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_index: splitmix64(self.stream_index ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019))),
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Mean with standard error and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    pub stream_index: u64,
}

impl MCEstimate {
    /// `|mean - target| <= k * stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }

    pub fn upper(&self, k: f64) -> f64 {
        self.mean + k * self.stderr
    }
}

#[derive(Debug, Clone, Default)]
pub struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sample_variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self, label: impl Into<String>, stream: RngStream) -> MCEstimate {
        MCEstimate {
            label: label.into(),
            mean: self.mean,
            stderr: self.stderr(),
            samples: self.count,
            seed: stream.master_seed,
            stream_index: stream.stream_index,
        }
    }
}

/// Entrywise Welford accumulation of matrix samples.
#[derive(Debug, Clone)]
pub struct MatrixWelford {
    rows: usize,
    cols: usize,
    re: Vec<Welford>,
    im: Vec<Welford>,
}

impl MatrixWelford {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, re: vec![Welford::default(); rows * cols], im: vec![Welford::default(); rows * cols] }
    }

    pub fn push(&mut self, a: &ComplexMatrix) {
        assert_eq!((a.rows(), a.cols()), (self.rows, self.cols));
        for i in 0..self.rows {
            for j in 0..self.cols {
                let z = a.get(i, j);
                self.re[i * self.cols + j].push(z.re);
                self.im[i * self.cols + j].push(z.im);
            }
        }
    }

    pub fn mean(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows, self.cols, |i, j| {
            let k = i * self.cols + j;
            C64::new(self.re[k].mean(), self.im[k].mean())
        })
    }

    /// Standard errors of the real and imaginary parts of entry `(i, j)`.
    pub fn entry_stderr(&self, i: usize, j: usize) -> (f64, f64) {
        let k = i * self.cols + j;
        (self.re[k].stderr(), self.im[k].stderr())
    }

    /// Frobenius norm of the entrywise standard errors; bounds the operator
    /// norm of the estimation error at the one-sigma level.
    pub fn stderr_frobenius(&self) -> f64 {
        self.re.iter().chain(&self.im).map(|w| w.stderr().powi(2)).sum::<f64>().sqrt()
    }
}

/// Evaluate `f(i, stream.substream(i))` for `i < samples` in parallel and
/// feed the results to `sink` in index order.
pub fn for_each_sample<T, F, S>(samples: usize, stream: RngStream, f: F, mut sink: S)
where
    T: Send,
    F: Fn(usize, RngStream) -> T + Sync,
    S: FnMut(T),
{
    let mut start = 0;
    while start < samples {
        let end = (start + BATCH).min(samples);
        let batch: Vec<T> = (start..end).into_par_iter().map(|i| f(i, stream.substream(i as u64))).collect();
        batch.into_iter().for_each(&mut sink);
        start = end;
    }
}

/// Monte Carlo mean of a scalar sample function.
pub fn mc_mean<F>(label: &str, samples: usize, stream: RngStream, f: F) -> MCEstimate
where
    F: Fn(RngStream) -> f64 + Sync,
{
    let mut acc = Welford::default();
    for_each_sample(samples, stream, |_, s| f(s), |x| acc.push(x));
    acc.estimate(label, stream)
}

/// Monte Carlo means of a fixed-length vector of sample values.
pub fn mc_mean_vec<F>(samples: usize, len: usize, stream: RngStream, f: F) -> Vec<Welford>
where
    F: Fn(RngStream) -> Vec<f64> + Sync,
{
    let mut acc = vec![Welford::default(); len];
    for_each_sample(samples, stream, |_, s| f(s), |xs: Vec<f64>| {
        for (a, x) in acc.iter_mut().zip(xs) {
            a.push(x);
        }
    });
    acc
}
