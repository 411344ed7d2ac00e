use chrono::NaiveDateTime;
use thiserror::Error;

use crate::AgentId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data quality error: gap of {missing} samples from {from} to {to}")]
    Gap {
        from: NaiveDateTime,
        to: NaiveDateTime,
        missing: usize,
    },

    #[error("data quality error: {0}")]
    DataQuality(String),

    #[error("series too short: need at least {needed} samples, got {actual}")]
    Length { needed: usize, actual: usize },

    #[error("degenerate (zero-variance) series: {0}")]
    DegenerateSeries(String),

    #[error("missing series for agent {0}")]
    MissingSeries(AgentId),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("config validation failed at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("reliability threshold {0} is on the boundary; the analytic contract diverges (use empirical mode)")]
    PhiBoundary(f64),

    #[error("infeasible: requested {requested} disjoint cliques, at most {max_achievable} achievable")]
    Infeasible {
        requested: usize,
        max_achievable: usize,
    },

    #[error("threshold scan ran out of its time budget at rho^2 = {epsilon} with {found} of {requested} disjoint cliques found")]
    ScanBudget {
        requested: usize,
        found: usize,
        epsilon: f64,
    },

    #[error("report aggregation error: {0}")]
    Aggregation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
