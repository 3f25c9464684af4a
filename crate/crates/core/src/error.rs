use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("uninitialized book: no quote on either side and no previous mid-price")]
    UninitializedBook,
    #[error("invalid normalizer: msd must be positive, got {0}")]
    InvalidNormalizer(f64),
    #[error("uniform draw must lie in (0, 1), got {0}")]
    InvalidUniform(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty series")]
    EmptySeries,
    #[error("series too short: need at least {need} values, got {got}")]
    SeriesTooShort { need: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("non-positive value {value} at index {index}")]
    NonPositive { index: usize, value: f64 },
    #[error("undefined moment: series has zero standard deviation")]
    UndefinedMoment,
    #[error("degenerate bounds in dimension {dim}: low {low} >= high {high}")]
    DegenerateBounds { dim: usize, low: f64, high: f64 },
    #[error("budget too small: need at least {need} evaluations, got {got}")]
    BudgetTooSmall { need: usize, got: usize },
    #[error("target length {target} does not match horizon {horizon}")]
    LengthMismatch { target: usize, horizon: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
