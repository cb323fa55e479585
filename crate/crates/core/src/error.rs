use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid generation model: {0}")]
    InvalidModel(String),

    #[error("invalid market configuration: {0}")]
    InvalidConfig(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    /// Every supplier offered zero quantity, so the price rule has no marginal offer.
    #[error("no clearing: total offered quantity is zero")]
    NoClearing,

    #[error("infeasible construction, condition {condition} violated: {detail}")]
    Infeasible {
        condition: &'static str,
        detail: String,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("equilibrium solver did not converge after {iterations} iterations (best epsilon {best_epsilon:.3e})")]
    NonConvergence {
        iterations: usize,
        best_epsilon: f64,
    },

    #[error("insufficient data: {found} records for month {month} hour {hour}, need at least 2")]
    InsufficientData { month: u32, hour: u32, found: usize },

    #[error("{path}: line {line}: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("scenario {field}: {message}")]
    Scenario { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn scenario(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            field: field.into(),
            message: message.into(),
        }
    }
}
