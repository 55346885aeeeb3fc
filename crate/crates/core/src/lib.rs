//! Two-scale homogenization of linear poroelasticity with a disconnected,
//! fluid-storing inclusion phase: unit-cell corrector problems, effective
//! coefficient extraction, interface memory kernels, and a macroscopic
//! Biot-with-memory time stepper.

// Index loops mirror the tensor-index notation of the assembly formulas;
// negated comparisons (`!(x > 0)`) deliberately reject NaN input.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell_problems;
pub mod cli;
pub mod config;
pub mod effective;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod macro_biot;
pub mod scalar;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use cli::cli_main;

/// Default-precision matrix coefficient.
pub type MatF64 = tensor::Mat<f64>;
/// Default-precision rank-4 elasticity tensor.
pub type Tensor4F64 = tensor::Tensor4<f64>;
