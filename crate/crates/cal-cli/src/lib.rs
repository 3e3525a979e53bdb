//! Command implementations behind the `cal` binary. Everything here is
//! callable as a library so the commands can be driven directly from tests.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{
    cmd_ablate, cmd_annotate, cmd_dedup, cmd_eval, cmd_import_cpg, cmd_parse, cmd_synth,
    cmd_train, AblationRow, SplitEval, TrainSummary,
};
pub use config::CliConfig;
pub use manifest::{Manifest, ManifestEntry, Split};

use thiserror::Error;

/// Exit-code carrying error: user/input problems exit 2, internal failures
/// exit 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn user(msg: impl Into<String>) -> CliError {
        CliError::User(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> CliError {
        CliError::Internal(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<cal_core::nn::NnError> for CliError {
    fn from(e: cal_core::nn::NnError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<cal_core::annotate::AnnotateError> for CliError {
    fn from(e: cal_core::annotate::AnnotateError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<cal_core::features::FeatureError> for CliError {
    fn from(e: cal_core::features::FeatureError) -> Self {
        CliError::User(e.to_string())
    }
}
