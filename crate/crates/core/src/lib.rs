//! semreduce-core: train steering-prediction CNNs on procedurally generated
//! road scenes, attribute their decisions with Grad-CAM, rank semantic-label
//! importance by channel ablation, and check that remapping unimportant
//! labels does not hurt control accuracy.
//!
//! The crate is organized around five subsystems:
//!
//! - [`autodiff`]: a dense f64 tensor type with reverse-mode automatic
//!   differentiation on an explicit tape, plus SGD.
//! - [`semantics`]: the 13-class label taxonomy, one-hot encoding, the
//!   7-class remapping, palettes, and bit-exact image/dataset I/O.
//! - [`scenegen`]: the procedural scene generator with an analytically
//!   known steering ground truth.
//! - [`models`]: the steering CNN, the encoder-decoder perception module
//!   with its latent control head, and their training loops.
//! - [`analysis`]: Grad-CAM heatmaps, input saliency, channel-ablation
//!   sensitivity scans, and report export.

pub mod analysis;
pub mod autodiff;
pub mod checkpoint;
pub mod models;
pub mod rng;
pub mod scenegen;
pub mod semantics;

pub use autodiff::{AutodiffError, Tape, Tensor};
pub use rng::Rng;
