use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("matrix of size {n} exceeds the limit of {limit}")]
    SizeExceeded { n: usize, limit: usize },
    #[error("dimension mismatch: expected d={expected}, found d={found}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: Option<String>,
    },
    #[error("invalid shape {d}x{l}: need d >= 2, L >= 2 and {expected} finite entries")]
    InvalidShape { d: usize, l: usize, expected: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("matrix is zero after centering")]
    DegenerateMatrix,
    #[error("average vector is zero")]
    AverageZero,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("dimension {dim} is constant (sigma = 0)")]
    ConstantDimension { dim: usize },
    #[error("input is not standardized (mean {mean:.3e}, sd {sd:.6})")]
    NotStandardized { mean: f64, sd: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid normal spec: {0}")]
    InvalidSpec(String),
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("sequence of length {len} exceeds max_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("invalid layer range {lo}..={hi} for {n_layers} layers")]
    RangeInvalid {
        lo: usize,
        hi: usize,
        n_layers: usize,
    },
    #[error("{}: parse error at {location}: {message}", path.display())]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },
    #[error("line {line}: expected {expected} components, found {found}")]
    InconsistentDimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate word {word:?}")]
    DuplicateWord { line: usize, word: String },
    #[error("duplicate sentence id {0:?}")]
    DuplicateId(String),
    #[error("sentence {index} has {remaining} in-vocabulary tokens after OOV handling (need 2)")]
    TooShortAfterOov { index: usize, remaining: usize },
    #[error("sentence {index}: unknown word {word:?}")]
    UnknownWord { index: usize, word: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
