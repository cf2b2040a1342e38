use std::fmt;
use std::io;

/// Every failure mode the library reports. Variants are grouped by how a
/// caller should react: bad configuration, bad input data, or a numeric
/// blow-up during training.
#[derive(Debug)]
pub enum Error {
    /// A hyperparameter or option is outside its legal range.
    InvalidConfig(String),
    /// Two inputs that must agree in shape do not.
    DimensionMismatch(String),
    /// A value that must be finite is NaN or infinite.
    NonFinite(String),
    /// A label value falls outside [0, 1].
    LabelOutOfRange { row: usize, col: usize, value: f64 },
    /// An operation needed hard 0/1 labels but got soft ones.
    NotBinary(String),
    /// A class embedding row has zero norm and cannot be normalized.
    ZeroEmbedding { row: usize },
    /// An input collection that must be non-empty is empty.
    EmptyInput(String),
    /// Neighbour count outside 1..=max for the graph at hand.
    KOutOfRange { k: usize, max: usize },
    /// AUC is undefined because one side (positives or negatives) is absent
    /// from every class.
    NoEvaluableClass,
    /// AUC for a single score vector whose labels are all one class.
    SingleClassLabels { positives: usize, negatives: usize },
    /// Training produced a non-finite objective.
    Divergence { stage: &'static str, epoch: usize, detail: String },
    /// A binary file starts with the wrong magic bytes.
    BadMagic { expected: &'static str, found: [u8; 4] },
    /// A binary file declares a format version we do not speak.
    BadVersion { found: u32 },
    /// A binary file is shorter than its header promises.
    Truncated { expected: u64, found: u64 },
    /// A file parses but its contents are inconsistent (trailing bytes,
    /// ragged CSV rows, unparsable numbers, ...).
    Malformed(String),
    Io(io::Error),
    Csv(csv::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
            Error::DimensionMismatch(what) => write!(f, "dimension mismatch: {what}"),
            Error::NonFinite(what) => write!(f, "non-finite value: {what}"),
            Error::LabelOutOfRange { row, col, value } => {
                write!(f, "label at ({row}, {col}) is {value}, outside [0, 1]")
            }
            Error::NotBinary(what) => write!(f, "expected hard 0/1 labels: {what}"),
            Error::ZeroEmbedding { row } => {
                write!(f, "class embedding row {row} has zero norm")
            }
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::KOutOfRange { k, max } => {
                write!(f, "neighbour count k={k} outside 1..={max}")
            }
            Error::NoEvaluableClass => {
                write!(f, "no class has both positive and negative test samples")
            }
            Error::SingleClassLabels { positives, negatives } => write!(
                f,
                "AUC undefined: {positives} positives and {negatives} negatives"
            ),
            Error::Divergence { stage, epoch, detail } => {
                write!(f, "{stage} diverged at epoch {epoch}: {detail}")
            }
            Error::BadMagic { expected, found } => write!(
                f,
                "bad magic: expected {expected:?}, found {:?}",
                String::from_utf8_lossy(found)
            ),
            Error::BadVersion { found } => write!(f, "unsupported format version {found}"),
            Error::Truncated { expected, found } => {
                write!(f, "file truncated: expected {expected} bytes, found {found}")
            }
            Error::Malformed(what) => write!(f, "malformed input: {what}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Csv(e) => write!(f, "csv error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Csv(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
