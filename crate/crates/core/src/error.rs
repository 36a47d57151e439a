use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite flow vector at row {row}, column {col} under a valid mask bit")]
    NonFinite { row: usize, col: usize },

    #[error("unknown transform `{0}`")]
    UnknownTransform(String),

    #[error("transform `{name}` takes {expected} parameters, got {got}")]
    TransformArity {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("transform matrix is singular")]
    SingularMatrix,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("padding {requested} exceeds field size {available}")]
    PaddingTooLarge { requested: String, available: String },

    #[error("degenerate support for matrix fit: {0}")]
    DegenerateFit(String),

    #[error("reference mismatch: {0}")]
    ReferenceMismatch(String),

    #[error("bad .flo magic number {0}")]
    BadMagic(f32),

    #[error("truncated .flo file: {0}")]
    Truncated(String),

    #[error("invalid .flo dimensions {width}x{height}")]
    BadDimensions { width: i32, height: i32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = FlowError> = std::result::Result<T, E>;
