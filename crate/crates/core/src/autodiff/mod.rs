//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Operations executed through a [`Tape`] record enough state to replay
//! their adjoints in reverse order; [`Tape::backward`] then populates the
//! `grad` buffer of every tensor the loss depends on. A tape together with
//! the tensors it touches is a single-threaded unit of work; independent
//! tapes may live on separate threads.

mod sgd;
mod tape;
mod tensor;

pub mod gradcheck;

pub use sgd::sgd_step;
pub use tape::Tape;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op} requires a non-empty input")]
    EmptyInput { op: &'static str },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward requires a loss produced by recorded operations")]
    LossNotOnTape,
    #[error("parameter is missing a gradient; run backward() first")]
    MissingGrad,
    #[error("invalid argument for {op}: {detail}")]
    InvalidArg { op: &'static str, detail: String },
}
