use thiserror::Error;

/// Errors produced by the calibration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rollout diverged: non-finite state at step {step}")]
    RolloutDivergence { step: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("duplicate training input with conflicting labels {first} and {second}")]
    DuplicateSample { first: f64, second: f64 },

    #[error("kernel matrix ill-conditioned: Cholesky failed with jitter up to {max_jitter:e}")]
    IllConditionedKernel { max_jitter: f64 },

    #[error("calibration set too small: n_C = {n} but alpha requires at least {min}")]
    CalibrationSetTooSmall { n: usize, min: usize },

    #[error("no calibration-set size up to {limit} meets the coverage tolerance")]
    InfeasibleTolerance { limit: usize },

    #[error("unlabeled dataset exhausted after {selected} selections without termination")]
    DatasetExhausted { selected: usize },

    #[error("oracle failed at grid index {index}: {source}")]
    GridOracle {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
