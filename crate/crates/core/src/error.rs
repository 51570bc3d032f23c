use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular or not positive definite")]
    SingularMatrix,
    #[error("weighted Gram matrix is degenerate")]
    DegenerateWeights,
    #[error("argument outside the function domain: {0}")]
    DomainError(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("regressor {0} is the zero vector")]
    ZeroRegressor(usize),
    #[error("direction vector is zero")]
    ZeroDirection,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionError { expected: usize, found: usize },
    #[error("alpha = {alpha} exceeds sigma = {sigma}")]
    AlphaExceedsSigma { alpha: f64, sigma: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset carries no noise record")]
    MissingNoiseRecord,
    #[error("alpha grid is empty")]
    EmptyGrid,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
