use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("row count mismatch: {points} point rows in {points_path}, {labels} label rows in {labels_path}")]
    RowCountMismatch {
        points_path: PathBuf,
        labels_path: PathBuf,
        points: usize,
        labels: usize,
    },

    #[error("label {label} is outside the declared class range [0, {class_count})")]
    LabelOutOfRange { label: u32, class_count: usize },

    #[error("bad chunk file magic {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported chunk file version {0}")]
    BadVersion(u16),

    #[error("truncated chunk file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no class weight for label {0}")]
    MissingWeight(u32),

    #[error("matrix is not a proper rotation (orthonormality error {ortho:e}, det {det})")]
    NotARotation { ortho: f64, det: f64 },

    #[error("chunk has {count} points, need at least {required}")]
    TooFewPoints { count: usize, required: usize },

    /// The inputs parsed but left nothing to write.
    #[error("{0}")]
    NoData(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by input or output files rather than by the
    /// arguments themselves.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidArgument(_))
    }
}
