//! Sparse low-rank Tucker tensor optimization for spatiotemporal data
//! imputation and block-sparse anomaly diagnosis.

// Negated comparisons also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod preprocess;
pub mod prox;
pub mod solver;
pub mod stiefel;
pub mod tensor;
pub mod tucker;

pub use error::{Error, Result};
pub use tensor::{Matrix, Mode, ObservationMask, Tensor3};
