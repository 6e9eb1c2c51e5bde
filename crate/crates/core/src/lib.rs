//! Stability analysis and nonlinear simulation of DC microgrids that feed a
//! constant-power load through droop-controlled converters augmented with a
//! consensus-based current-sharing and voltage-recovery layer.

// `!(x > 0.0)` is used on purpose so NaN is rejected with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod matrixkit;
pub mod netgraph;
pub mod plant;
pub mod scenario;
pub mod simulator;
pub mod stability;

pub use error::{Error, Result};
