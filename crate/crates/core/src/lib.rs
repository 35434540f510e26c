//! Forward and backward Monge-Brenier potentials between the standard
//! Gaussian on `R^d` and targets `dν = c⁻¹ e^{-f} dμ`.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity,
    clippy::len_without_is_empty
)]

pub mod backward;
pub mod diagnostics;
pub mod entropy;
pub mod error;
pub mod forward;
pub mod gaussian;
pub mod hermite;
pub mod optimize;
pub mod oracle1d;
pub mod potential;
pub mod smoothing;

pub use error::{Error, Result};
pub use forward::{solve, SolveConfig, SolveResult};
pub use gaussian::{GaussianSpace, QuadraturePolicy, QuadratureRule, ScalarTarget, TargetKind, TargetMeasure};
pub use potential::{Direction, PotentialField, TransportShift};
