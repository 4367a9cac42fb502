//! Kronecker-factored second-order optimizers whose preconditioners need only
//! positive matrix roots, next to Shampoo and AdaGrad baselines, the matrix
//! root numerics they rely on, and a synthetic ill-conditioned benchmark.

pub mod bench;
pub mod classic;
pub mod error;
pub mod kron_approx;
pub mod linalg;
pub mod roots;
pub mod precond;
pub mod tensor;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, Precision};
