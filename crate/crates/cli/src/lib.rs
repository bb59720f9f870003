//! Experiment harness: configuration, subcommands and CSV/JSON-lines output.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use serde_json::json;

pub use commands::{run, Subcommand};
pub use config::{ExperimentConfig, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] jumpgauss_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(jumpgauss_core::Error::InvalidConfig(_)) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(e) => e.kind(),
            CliError::Io { .. } => "io",
        }
    }

    /// One-line JSON error record for stderr.
    pub fn record(&self) -> serde_json::Value {
        let mut rec = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Runtime(jumpgauss_core::Error::NumericalBlowup { events, .. }) = self {
            rec["events"] = json!(events);
        }
        if let CliError::Io { path, .. } = self {
            rec["path"] = json!(path.display().to_string());
        }
        rec
    }
}
