//! Dense complex linear algebra.

mod matrix;
mod spectral;
mod tensor;
mod testfn;

pub use matrix::{ComplexMatrix, C64};
pub use spectral::{
    abs_matrix, chop_general, hermitian_defect, hermitian_eigen, hermitian_eigenvalues, is_hermitian, op_norm,
    polar_maximizer, singular_values, spectral_apply, svd, unitarity_defect, unitary_polar_factor, HermitianEigen,
    Svd, HERMITIAN_TOL,
};
pub(crate) use spectral::hermitian_eigen_unchecked;
pub use tensor::{
    embed_iota, embed_iota_tensor, odot, partial_trace_1, partial_trace_2, Tensor4, VectorMatrix, FACTOR_TOL,
};
pub use testfn::{std_normal_cdf, std_normal_pdf, PiecewiseLinear, ScalarTestFn};
