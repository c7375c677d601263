use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum FptError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate scale: {0}")]
    DegenerateScale(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("missing weights: {0}")]
    MissingWeights(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl FptError {
    /// Short stable name of the variant, used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            FptError::InvalidInput(_) => "InvalidInput",
            FptError::Shape(_) => "ShapeError",
            FptError::NumericalFailure(_) => "NumericalFailure",
            FptError::Format(_) => "FormatError",
            FptError::InsufficientData(_) => "InsufficientData",
            FptError::DegenerateScale(_) => "DegenerateScale",
            FptError::RankDeficient(_) => "RankDeficient",
            FptError::MissingWeights(_) => "MissingWeights",
            FptError::Io(_) => "IoError",
        }
    }
}

pub type Result<T> = std::result::Result<T, FptError>;
