use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("covariance of component {component} is not positive definite")]
    SingularModel { component: usize },

    #[error("component {component} is empty (effective count {count:e})")]
    EmptyComponent { component: usize, count: f64 },

    #[error("every component density underflows at row {row}")]
    Underflow { row: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("penalty undefined: {0}")]
    UndefinedPenalty(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no viable model: all {attempted} candidates failed")]
    NoViableModel { attempted: usize },

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable kind, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::SingularModel { .. } => "singular_model",
            Error::EmptyComponent { .. } => "empty_component",
            Error::Underflow { .. } => "underflow",
            Error::InsufficientData(_) => "insufficient_data",
            Error::UndefinedPenalty(_) => "undefined_penalty",
            Error::Domain(_) => "domain",
            Error::InvalidInput(_) => "invalid_input",
            Error::NoViableModel { .. } => "no_viable_model",
            Error::DegenerateTest(_) => "degenerate_test",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Failures that mark a single model candidate as unusable rather than
    /// aborting a whole search.
    pub fn is_candidate_failure(&self) -> bool {
        matches!(
            self,
            Error::SingularModel { .. }
                | Error::EmptyComponent { .. }
                | Error::Underflow { .. }
                | Error::InsufficientData(_)
        )
    }
}
