use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains no observations")]
    EmptyInput,

    #[error("line {line}, column {column}: cannot parse {token:?} as a number")]
    Parse {
        line: usize,
        column: usize,
        token: String,
    },

    #[error("line {line}: row has {found} columns, expected {expected}")]
    InconsistentWidth {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: zero-norm vector")]
    ZeroNorm { row: usize },

    #[error("row {row}: norm {norm} is not 1 (tolerance {tolerance:e})")]
    NotUnit { row: usize, norm: f64, tolerance: f64 },

    #[error("dimension p = {0} is not supported (need p >= 2)")]
    Dimension(usize),

    #[error("{test} requires {requirement}, got {got}")]
    Unsupported {
        test: String,
        requirement: String,
        got: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("null-draw cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn too_few(test: &str, needed: usize, got: usize) -> Self {
        Error::Unsupported {
            test: test.to_string(),
            requirement: format!("n >= {needed}"),
            got: format!("n = {got}"),
        }
    }

    pub(crate) fn needs_circle(test: &str, p: usize) -> Self {
        Error::Unsupported {
            test: test.to_string(),
            requirement: "p=2".to_string(),
            got: format!("p={p}"),
        }
    }
}
