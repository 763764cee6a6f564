use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("data has affine rank {achieved}, fewer than the {requested} endmembers requested")]
    Degenerate { achieved: usize, requested: usize },

    #[error("singular endmember system at pixel {pixel} (lambda_m = 0 with a degenerate abundance vector)")]
    Singular { pixel: usize },

    #[error("zero-norm spectrum at pixel {pixel}, endmember {endmember}")]
    ZeroNorm { pixel: usize, endmember: usize },

    #[error("{path}: {kind}")]
    Format { path: PathBuf, kind: FormatError },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by how the caller invoked an operation, as
    /// opposed to problems with the data itself.
    pub fn is_argument_error(&self) -> bool {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_argument_error(),
            _ => false,
        }
    }

    /// Innermost error, unwrapping pipeline stage context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Corruption found while decoding one of the binary or CSV formats.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected `{expected}`, found `{found}`")]
    BadMagic { expected: &'static str, found: String },

    #[error("malformed header at byte {offset}: {message}")]
    Header { offset: usize, message: String },

    #[error("truncated payload at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("trailing data at byte {offset}: {extra} bytes after the declared payload")]
    Trailing { offset: usize, extra: usize },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("row {row}, column {column}: cannot parse `{cell}` as a number")]
    Parse {
        row: usize,
        column: usize,
        cell: String,
    },
}

/// Non-fatal conditions reported alongside a result.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// CP rank larger than the mode dimension; the fit is still computed.
    RankExceedsDimension { rank: usize, mode: usize, dim: usize },
    /// No pure pixels were found for this endmember.
    EmptyPureSet { endmember: usize },
    /// ADMM stopped at the iteration cap before reaching tolerance.
    AdmmNotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
    },
    /// An objective trace increased by more than its allowed slack.
    NonMonotone {
        stage: &'static str,
        iteration: usize,
        increase: f64,
    },
}

impl Warning {
    /// Whether `--strict` treats this as non-convergence.
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Warning::AdmmNotConverged { .. } | Warning::NonMonotone { .. }
        )
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::RankExceedsDimension { rank, mode, dim } => write!(
                f,
                "CP rank {rank} exceeds dimension {dim} of mode {mode}"
            ),
            Warning::EmptyPureSet { endmember } => {
                write!(f, "no pure pixels found for endmember {endmember}")
            }
            Warning::AdmmNotConverged {
                iterations,
                primal,
                dual,
            } => write!(
                f,
                "ADMM did not converge in {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})"
            ),
            Warning::NonMonotone {
                stage,
                iteration,
                increase,
            } => write!(
                f,
                "{stage}: objective increased by {increase:.3e} at iteration {iteration}"
            ),
        }
    }
}
