//! Precision-tagged dense matrices and symmetric spectral primitives.

mod eig;
mod matrix;
mod ops;
pub(crate) mod scalar;

pub use eig::{min_eigenvalue, sym_eig, sym_eig_with, EigMethod, SymEig, JACOBI_MAX_DIM};
pub use matrix::{DenseMatrix, Precision};
pub(crate) use matrix::{with_data, Storage};
pub use ops::{
    column, frob_norm, kron, mat_power_psd, power_from_eig, psd_clamp_tol, spec_norm, unvec, vec,
    KRON_MAX_ENTRIES,
};
