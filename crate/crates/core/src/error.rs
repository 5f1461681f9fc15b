use std::path::{Path, PathBuf};

/// Errors produced anywhere in the detection library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("image has zero width or height")]
    EmptyImage,
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("descriptor mismatch: model expects `{expected}`, got `{got}`")]
    DescriptorMismatch { expected: String, got: String },
    #[error("region has no pixels")]
    EmptyRegion,
    #[error("degenerate rectangle {0:?}")]
    DegenerateRect(crate::rect::Rect),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("unsupported model format `{found}` (expected `{expected}`)")]
    ModelVersion { found: String, expected: String },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("malformed manifest {path} line {line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("missing image file {0}")]
    MissingImage(PathBuf),
    #[error("image id mismatch: {0}")]
    IdMismatch(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Create the directory that will hold `path`, if it has one.
pub(crate) fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}
