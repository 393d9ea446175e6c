use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation; `field` is the dotted key path.
    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("cannot deploy zero nodes")]
    EmptyDeployment,

    #[error("negative energy debit: {0}")]
    NegativeDebit(f64),

    #[error("node has no layer (unreachable from the base station)")]
    Unlayered,

    #[error("cluster-head has no alive neighbors; it forms a singleton cluster")]
    SingletonCluster,

    #[error("cannot summarize an empty group")]
    EmptyGroup,

    #[error("threshold calibration did not converge after {iterations} iterations (best fraction {best_fraction:.4}, target {target:.4})")]
    NoConvergence {
        iterations: usize,
        best_fraction: f64,
        target: f64,
    },

    #[error("failed to parse configuration: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
