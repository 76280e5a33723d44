//! Matrix-valued Boolean Fourier analysis, noncommutative multilinear
//! polynomials under random matrix ensembles, and noncommutative
//! Grothendieck-type objectives.

pub mod ensembles;
pub mod error;
pub mod estimators;
pub mod fourier;
pub mod lab;
pub mod linalg;
pub mod mc;
pub mod ncgi;
pub mod ncpoly;

pub use error::{Error, Result};
pub use fourier::CubeFunction;
pub use linalg::{ComplexMatrix, ScalarTestFn, Tensor4, VectorMatrix, C64};
pub use ncpoly::{Input, NCPoly};
pub use ensembles::EnsembleSpec;
pub use mc::{MCEstimate, RngStream};
pub use estimators::{PsiMode, TraceNorm};
