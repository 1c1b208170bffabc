use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Hovering alone already exceeds the per-slot energy budget.
    #[error("hover energy {hover_energy:.3} J exceeds the per-slot budget {e_max:.3} J")]
    HoverInfeasible { hover_energy: f64, e_max: f64 },

    #[error("no feasible starting point: {0}")]
    Infeasible(String),

    #[error("instance too large for exhaustive enumeration: {0} candidate matchings")]
    InstanceTooLarge(u64),

    #[error("fairness index undefined for all-zero rates")]
    UndefinedFairness,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
