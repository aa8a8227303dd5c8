use std::path::PathBuf;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("problem setup is invalid:\n{0}")]
    InvalidSetup(ValidationReport),

    /// No nonnegative recentering weights exist; `residual` is the minimal
    /// l1 residual of the gradient condition at the origin.
    #[error("recentering weights are infeasible (residual {residual:.3e})")]
    InfeasibleRecentering { residual: f64 },

    #[error("Riccati iteration did not reach a stabilizing solution after {iterations} iterations")]
    NoStabilizingSolution { iterations: usize },

    #[error("Hessian factorization failed")]
    SingularHessian,

    #[error("line search exceeded {iterations} trial steps")]
    LineSearchStall { iterations: usize },

    #[error("config error at `{key}`{}: {message}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Config {
        key: String,
        row: Option<usize>,
        message: String,
    },

    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid JSON in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            row,
            message: message.into(),
        }
    }

    /// True for errors caused by user input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSetup(_)
                | Error::Config { .. }
                | Error::Io { .. }
                | Error::Json { .. }
                | Error::Dimension { .. }
                | Error::InfeasibleRecentering { .. }
        )
    }
}
