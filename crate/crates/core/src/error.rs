use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {context}: {left} vs {right}")]
    Shape {
        context: &'static str,
        left: String,
        right: String,
    },

    #[error("singular system: pivot {pivot:e} at column {column} below tolerance")]
    Singular { column: usize, pivot: f64 },

    #[error("rank-deficient design: collinear columns {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training aborted at epoch {epoch}: non-finite loss (last finite epoch: {last_finite_epoch:?})")]
    NonFiniteLoss {
        epoch: usize,
        last_finite_epoch: Option<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model document error at byte {offset}: {message}")]
    ModelParse { offset: usize, message: String },

    #[error("model document is inconsistent: {0}")]
    ModelShape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("undefined statistic: {0}")]
    Undefined(String),
}

impl Error {
    pub(crate) fn shape(context: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            context,
            left: left.to_string(),
            right: right.to_string(),
        }
    }
}
