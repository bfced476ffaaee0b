//! Command-line experiments on top of `ncla_core`: configuration files and
//! presets, training, evaluation, loss-variant ablations, hyperparameter
//! sweeps, gradient checks and graph-pack utilities.

pub mod cli;
pub mod commands;
pub mod config;

use serde::Serialize;

/// Machine-readable failure report written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: String,
    pub causes: Vec<String>,
}

impl From<&anyhow::Error> for ErrorReport {
    fn from(e: &anyhow::Error) -> Self {
        Self {
            error: e.to_string(),
            causes: e.chain().skip(1).map(ToString::to_string).collect(),
        }
    }
}
