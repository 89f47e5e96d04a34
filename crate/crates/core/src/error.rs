use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("association set is empty")]
    EmptyAssociation,

    #[error("fused instance is degenerate (start {start}, end {end})")]
    DegenerateResult { start: f64, end: f64 },

    #[error("no loss samples supplied")]
    EmptyInput,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: String, reason: String },

    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),

    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("config error in {}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },

    #[error(
        "unknown sweep parameter `{0}` (expected one of rho, psi, eta0, eta1, eta2, alpha, beta)"
    )]
    UnknownParam(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid_param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleConfig(_) => 3,
            Error::Io { .. } => 1,
            _ => 2,
        }
    }
}
