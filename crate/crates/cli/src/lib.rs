//! Command implementations behind the `semreduce` binary. Kept in a library
//! so integration tests can drive them directly.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_compare, cmd_eval, cmd_generate, cmd_gradcam, cmd_remap, cmd_sensitivity, cmd_train,
};
pub use config::{CliConfig, RunConfig};
