use thiserror::Error;

use crate::algorithms::AlgoError;
use crate::analysis::AnalysisError;
use crate::mdp::MdpError;
use crate::oracles::OracleError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for the harness and CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Algo(#[from] AlgoError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Mdp(_) | Error::Config(_) | Error::Json(_) | Error::Analysis(_)
        ) || matches!(self, Error::Oracle(OracleError::Features(_)))
    }
}
