use std::path::PathBuf;

use thiserror::Error;

use crate::chromosome::{ChromosomeKey, Gene};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{gene} = {value} is below the lower bound {min}")]
    BelowMinimum { gene: Gene, value: u32, min: u32 },
    #[error("{gene} = {value} is above the upper bound {max}")]
    AboveMaximum { gene: Gene, value: u32, max: u32 },
    #[error("frozen_layers = {frozen} exceeds included_layers = {included}")]
    FrozenExceedsIncluded { frozen: u32, included: u32 },
    #[error("{gene} = {value} is not in the menu")]
    NotInMenu { gene: Gene, value: f64 },
    #[error("{gene} menu index {index} is out of range")]
    MenuIndexOutOfRange { gene: Gene, index: u16 },
    #[error("architecture plan is not the image of any chromosome")]
    MalformedPlan,
    #[error("invalid gene domains: {0}")]
    InvalidDomains(String),
}

/// Invalid search configuration. `key` names the offending setting.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

/// Failure reported by a fitness evaluator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluatorError {
    #[error("no lookup entry for chromosome {0}")]
    MissingEntry(ChromosomeKey),
    #[error("plan does not decode to a chromosome: {0}")]
    Plan(#[from] DomainError),
    #[error("evaluator returned an invalid loss {0}")]
    InvalidLoss(f64),
    #[error("trainer timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("malformed trainer response: {raw:?}")]
    MalformedResponse { raw: String },
    #[error("trainer reported an error: {0}")]
    Trainer(String),
    #[error("trainer exited ({status}): {stderr}")]
    ChildExited { status: String, stderr: String },
    #[error("failed to start trainer `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("trainer i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no samples")]
    Empty,
    #[error("AUC needs at least one positive and one negative label")]
    SingleClass,
    #[error("label {0} is not binary (expected 0 or 1)")]
    NonBinaryLabel(f64),
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
}

/// Errors surfaced by the command-line front end.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Usage(String),
}
