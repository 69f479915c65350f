//! Library surface of the `optistate` binary; the subcommands live here so
//! integration tests can run them in-process.

pub mod commands;
pub mod csvio;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod profile;
pub mod svg;

pub use commands::{cmd_evaluate, cmd_report, cmd_simulate, cmd_train_gru, cmd_train_vit,
    EvaluateFlags};
pub use error::CliError;
pub use profile::{PipelineConfig, Profile};
