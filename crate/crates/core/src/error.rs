use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,
    #[error("glyph for {0:?} is missing from the bundled font")]
    GlyphUnavailable(char),
    #[error("invalid render spec: {0}")]
    InvalidSpec(String),
    #[error("table row {row} has {got} cells, expected {expected}")]
    RaggedTable { row: usize, got: usize, expected: usize },
    #[error("invalid canvas: {0}")]
    InvalidCanvas(String),
    #[error("mask covers {mask} entries but the input has {expected}")]
    MaskMismatch { mask: usize, expected: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("coordinate ({row}, {col}) is outside the {max_rows}x{max_cols} positional grid")]
    CoordinateOutOfRange {
        row: usize,
        col: usize,
        max_rows: usize,
        max_cols: usize,
    },
    #[error("token sequence is empty")]
    EmptySequence,
    #[error("decode range [{start}, {end}) is empty or exceeds {steps} steps")]
    EmptyRange { start: usize, end: usize, steps: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate variance")]
    DegenerateVariance,
    #[error("baseline time must be positive, got {0}")]
    NonpositiveBaseline(f64),
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("schema error at line {line}: {message}")]
    SchemaError { line: usize, message: String },
    #[error("mode {mode} is incompatible with example {id}: {reason}")]
    IncompatibleMode {
        mode: String,
        id: String,
        reason: String,
    },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication error: {0}")]
    Auth(String),
    #[error("no answer found in response")]
    NoAnswerFound,
    #[error("runs cannot be compared: {0}")]
    MismatchedRuns(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("png: {0}")]
    Png(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
