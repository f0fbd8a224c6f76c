use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("estimator needs the {0} group but it has no samples")]
    EmptyGroup(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("feature matrix contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("training group `{0}` is empty")]
    EmptyTargetGroup(String),

    #[error("no learner was trained for group `{0}`")]
    UnseenGroup(String),

    #[error("fewer than two subgroups have `{0}` defined")]
    InsufficientDefinedCells(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("cannot parse `{value}` in column `{column}` at data row {row}")]
    UnparsableCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset has no usable rows")]
    EmptyDataset,

    #[error("need at least {needed} rows to split, found {found}")]
    TooFewRows { needed: usize, found: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
