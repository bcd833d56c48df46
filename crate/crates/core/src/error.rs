use std::path::PathBuf;

use crate::mdp::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data that no operation accepts (NaN, infinities, empty vectors).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid MDP ({} violation(s)): {}", .0.len(), format_violations(.0))]
    InvalidMdp(Vec<Violation>),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error at line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("at grid point [{point}]: {source}")]
    GridPoint {
        point: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Parameter {
            name,
            value,
            reason,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's inputs rather than by a computation.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Numerical(_) => false,
            Error::GridPoint { source, .. } => source.is_usage(),
            _ => true,
        }
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
