use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("state label {label} out of range for K = {k}")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("hyperparameter bound infeasible; alpha_low must be below {max_alpha_low}")]
    InfeasibleBound { max_alpha_low: f64 },

    #[error("prior density evaluated on the simplex boundary")]
    BoundaryDensity,

    #[error("trace is empty")]
    EmptyTrace,

    #[error("no iteration has {0} occupied states")]
    NoSuchModel(usize),

    #[error("no allocation vectors recorded for the selected iterations")]
    NoAllocations,

    #[error("adjacent swap rate for rungs {pair}-{next} is {rate:.4}, below floor {floor}", next = pair + 1)]
    SwapRateTooLow { pair: usize, rate: f64, floor: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidTransition(_) => "InvalidTransition",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::InfeasibleBound { .. } => "InfeasibleBound",
            Error::BoundaryDensity => "BoundaryDensity",
            Error::EmptyTrace => "EmptyTrace",
            Error::NoSuchModel(_) => "NoSuchModel",
            Error::NoAllocations => "NoAllocations",
            Error::SwapRateTooLow { .. } => "SwapRateTooLow",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
