//! The steering CNN, the encoder-decoder perception module with its latent
//! control head, and their plain-SGD training loops.

mod perception;
mod steernet;
mod train;

pub use perception::{ControlHead, PerceptionCoder, PerceptionConfig};
pub use steernet::{SteerNet, SteerNetConfig, SteerTrace};
pub use train::{
    embed_dataset, evaluate_modular, evaluate_perception, evaluate_steernet, steer_input,
    train_control, train_perception, train_steernet, EpochStats, Hyperparams,
    PerceptionEpochStats,
};

use thiserror::Error;

use crate::semantics::LabelSetKind;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("wrong input: {0}")]
    WrongInput(String),
    #[error("dataset label set is {found:?}, model needs {expected:?}")]
    LabelSetMismatch { expected: LabelSetKind, found: LabelSetKind },
    #[error("training diverged (non-finite loss) at epoch {epoch} ({context})")]
    Diverged { epoch: usize, context: String },
    #[error("split is empty")]
    EmptySplit,
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Semantics(#[from] crate::semantics::SemanticsError),
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
}
