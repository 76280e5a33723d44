//! Fixed benchmark inputs, shared by the criterion benches.

use ncmaj_core::ensembles::ginibre;
use ncmaj_core::lab::random_poly;
use ncmaj_core::linalg::{ComplexMatrix, Tensor4};
use ncmaj_core::ncgi::random_psd_tensor;
use ncmaj_core::{NCPoly, RngStream};

const SEED: u64 = 7;

pub fn poly(m: usize, n: usize, d: usize) -> NCPoly {
    random_poly(m, n, d, false, &mut RngStream::new(SEED, 0).rng()).expect("valid shape")
}

pub fn square(n: usize) -> ComplexMatrix {
    ginibre(n, n, 1.0, &mut RngStream::new(SEED, 1).rng())
}

pub fn psd_tensor(n: usize, factors: usize) -> Tensor4 {
    random_psd_tensor(n, factors, &mut RngStream::new(SEED, 2).rng()).expect("valid shape")
}

pub fn dense_tensor(n: usize) -> Tensor4 {
    Tensor4::from_matrix(ginibre(n * n, n * n, 1.0, &mut RngStream::new(SEED, 3).rng())).expect("square")
}
