use thiserror::Error;

pub type Result<T> = std::result::Result<T, CarError>;

#[derive(Debug, Error)]
pub enum CarError {
    #[error("minimum depth must be > 0 for a log table, got {a}")]
    NonPositiveMin { a: f64 },
    #[error("invalid depth range: need a < b, got a={a}, b={b}")]
    BadRange { a: f64, b: f64 },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("all raw widths are <= 0 and eps is 0; cannot normalize")]
    DegenerateWidths,
    #[error("invalid widths: {0}")]
    InvalidWidths(String),
    #[error("depth must be > 0, got {value} at pixel {index}")]
    NonPositiveDepth { index: usize, value: f64 },
    #[error("expected a {expected} table, got {found}")]
    WrongTableSpace {
        expected: &'static str,
        found: &'static str,
    },
    #[error("smoothing coefficient must be a finite positive number, got {0}")]
    InvalidGamma(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("target entry {value} at row {row}, column {col} is outside [0, 1]")]
    TargetOutOfRange { row: usize, col: usize, value: f64 },
    #[error("ordinal logits need an even channel count, got {0}")]
    OddChannels(usize),
    #[error("label kind {found} is not accepted here (expected one of {expected})")]
    WrongLabelKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("probability semantics mismatch: expected {expected}, found {found}")]
    SemanticsMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("ensemble variance needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("validity masks differ between inputs")]
    MaskMismatch,
    #[error("no valid pixels")]
    EmptyMask,
    #[error("step must lie in (0, 0.5], got {0}")]
    InvalidStep(f64),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("not an npy file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported npy dtype '{0}'")]
    UnsupportedDtype(String),
    #[error("unsupported npy format version {0}.{1}")]
    UnsupportedVersion(u8, u8),
    #[error("malformed npy header: {0}")]
    MalformedHeader(String),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CarError {
    pub(crate) fn shape(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        CarError::ShapeMismatch {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for errors caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, CarError::Io(_))
    }
}
