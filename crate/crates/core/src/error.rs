use std::fmt;

/// Failure families reported by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("histogram has fewer than two modes after smoothing")]
    Unimodal,
    #[error("image is {width}x{height}, at least 2x2 is required")]
    TooSmall { width: usize, height: usize },
    #[error("image holds a value other than the two binary levels: {0}")]
    NotBinary(u32),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("object pixel on the image border at ({x},{y}); frame the image first")]
    Unframed { x: usize, y: usize },
    #[error("more than {0} contour cycles")]
    CycleOverflow(usize),
    #[error("row {0} holds an odd or non-alternating transition chain")]
    Unbalanced(usize),
    #[error("contour of blob {0} is not 4-connected")]
    BrokenContour(u32),
    #[error("object has zero surface")]
    EmptyObject,
    #[error("empty list")]
    EmptyList,
    #[error("too few points: {got}, need {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("chord ends coincide")]
    ZeroLength,
    #[error("histogram has no nonzero cell")]
    EmptyHistogram,
    #[error("value {value} outside the class map range {limit}")]
    OutOfRange { value: u32, limit: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("both class dispersions are zero")]
    Degenerate,
    #[error("logarithmic variable needs positive values, got {0}")]
    NonPositiveLog(f64),
    #[error("covariance matrix is singular")]
    SingularCovariance,
    #[error("class {0} has no sample")]
    EmptyClass(usize),
    #[error("calibration mask {0} is empty")]
    EmptyMask(usize),
    #[error("transform is not invertible over the footprint")]
    NotInvertible,
    #[error("polynomial order {0} outside 1..=3")]
    InvalidOrder(u8),
    #[error("control point source ({0}, {1}) appears twice")]
    DuplicateControlPoint(f64, f64),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("object id {id} out of range ({count} objects)")]
    IdOutOfRange { id: usize, count: usize },
    #[error("no attribute selected")]
    EmptySelection,
    #[error("interval {dim} has lo {lo} > hi {hi}")]
    InvalidInterval { dim: usize, lo: f64, hi: f64 },
    #[error("tree shapes differ")]
    ShapeMismatch,
    #[error("image {0} is not available")]
    MissingImage(u32),
    #[error("parse error: {0}")]
    Parse(ParseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Location and cause of a malformed input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub what: &'static str,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{} line {}: {}", self.what, self.line, self.message)
        } else {
            write!(f, "{}: {}", self.what, self.message)
        }
    }
}

impl Error {
    pub fn parse(what: &'static str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse(ParseError {
            what,
            line,
            message: message.into(),
        })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
