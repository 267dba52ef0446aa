use alloc::string::String;

/// Errors raised by the controller, metrics and simulator.
///
/// Out-of-memory is deliberately absent: an OOM is a recorded outcome of a
/// training step, not an error.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(
        "accuracy matrix is incomplete: missing entry after experience {after}, on experience {on}"
    )]
    IncompleteMatrix { after: usize, on: usize },
    #[error("invalid accuracy {value} at ({after}, {on}); must lie in [0, 1]")]
    InvalidAccuracy { after: usize, on: usize, value: f64 },
    #[error("invalid preference ordering: {0}")]
    InvalidPreference(String),
    #[error("non-finite or out-of-domain value for {0}")]
    NumericDomain(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("budget infeasible: {0}")]
    InfeasibleBudget(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("experience {got} requested but environment expects {expected}")]
    ExperienceOrder { expected: usize, got: usize },
    #[error("environment is in a failed state after an out-of-memory outcome")]
    EnvironmentFailed,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
