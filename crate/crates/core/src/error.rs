use thiserror::Error;

/// Errors shared by every module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid particle configuration: {0}")]
    InvalidConfig(String),

    #[error("multi-index {n:?} is not a weakly decreasing sequence of labels in 0..={max}")]
    NotInWeylChamber { n: Vec<usize>, max: usize },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("state space dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("infeasible contour geometry: {0}")]
    InfeasibleContour(String),

    #[error("quadrature did not converge: last relative change {last_change:e} with {points} points")]
    NonConvergence { points: usize, last_change: f64 },

    #[error("zeta must avoid the positive real axis")]
    ZetaOnPositiveAxis,

    #[error("at least one sample is required")]
    ZeroSamples,

    #[error("simulation budget exceeded: {0}")]
    BudgetExceeded(String),
}

pub type Result<T> = std::result::Result<T, Error>;
