use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("point ({x}, {y}) lies outside the observation region")]
    OutOfRegion { x: f64, y: f64 },
    #[error("component index {index} out of range for {count} components")]
    ComponentOutOfRange { index: usize, count: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("pattern not supported by the model: point {point} has zero density under every component")]
    PatternUnsupported { point: usize },
    #[error("label enumeration needs {needed} configurations, budget is {budget}")]
    EnumerationBudget { needed: f64, budget: f64 },
    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("information matrix is rank deficient (smallest eigenvalue {eigenvalue:e})")]
    RankDeficient { eigenvalue: f64, direction: alloc::vec::Vec<f64> },
    #[error("model selection failed: every grid cell was invalid")]
    SelectionFailed,
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;
