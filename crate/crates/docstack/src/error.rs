//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("{context}: tensor data length {got} does not match shape product {expected}")]
    DataLength {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{context}: output size not integral (input {input}, kernel {kernel}, stride {stride}, pad {pad})")]
    BadGeometry {
        context: &'static str,
        input: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate crop rectangle {rect:?} on {width}x{height} image")]
    DegenerateCrop {
        rect: (f64, f64, f64, f64),
        width: usize,
        height: usize,
    },

    #[error("standardization stats for view '{expected}' applied to view '{got}'")]
    StatsViewMismatch { expected: String, got: String },

    #[error("classifier used before training: {0}")]
    Untrained(&'static str),

    #[error("id sets differ across prediction tables: {0}")]
    TableIdMismatch(String),

    #[error("validation/test leakage: {count} ids shared across splits, first offenders: {sample:?}")]
    Leakage { count: usize, sample: Vec<String> },

    #[error("bad magic bytes in {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported format version in {path}: file has v{found}, this build reads v{expected}")]
    BadVersion {
        path: PathBuf,
        expected: u16,
        found: u16,
    },

    #[error("truncated file {path}: needed {needed} more bytes")]
    Truncated { path: PathBuf, needed: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("missing artifact {path}; run the `{produced_by}` stage first")]
    MissingArtifact { path: PathBuf, produced_by: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error {
        let context = context.into();
        move |source| Error::Io { context, source }
    }
}
