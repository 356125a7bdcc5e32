//! Crate-wide error type and its mapping onto CLI exit categories.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error category, used for exit codes and machine-readable CLI output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Validation,
    RecognitionFailed,
    Io,
    Format,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Validation => 2,
            Category::RecognitionFailed => 3,
            Category::Io => 4,
            Category::Format => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Validation => "validation",
            Category::RecognitionFailed => "recognition-failed",
            Category::Io => "io",
            Category::Format => "format",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid slice: {0}")]
    InvalidSlice(String),

    #[error("rescaled raster would be {width}x{height}")]
    DegenerateDimensions { width: usize, height: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing metadata: {}", .0.display())]
    MissingMetadata(PathBuf),

    #[error("corrupt image {}: {reason}", path.display())]
    CorruptImage { path: PathBuf, reason: String },

    #[error("atlas needs at least one patch")]
    EmptyPatchSet,

    #[error("search region {region_w}x{region_h} cannot hold a {atlas_w}x{atlas_h} atlas")]
    SearchRegionTooSmall {
        region_w: usize,
        region_h: usize,
        atlas_w: usize,
        atlas_h: usize,
    },

    #[error("retrosternal area not recognised: no candidate passed confirmation")]
    RecognitionFailed,

    #[error("window size {0} must be odd")]
    EvenWindowSize(usize),

    #[error("degenerate window: {0}")]
    DegenerateWindow(&'static str),

    #[error("window has zero grey mass")]
    ZeroMass,

    #[error("slice has no foreground pixels")]
    EmptySlice,

    #[error("scan/mask alignment mismatch: {0}")]
    AlignmentMismatch(String),

    #[error("malformed ARFF at line {line}: {reason}")]
    MalformedArff { line: usize, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("scan registered to {found:?} but model expects {expected:?}")]
    RegistrationMismatch {
        expected: Option<(i32, i32)>,
        found: Option<(i32, i32)>,
    },

    #[error("model format version {found}, expected {expected}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("label sequences differ in length ({truth} vs {predicted})")]
    LengthMismatch { truth: usize, predicted: usize },

    #[error("unknown class index {0}")]
    UnknownClass(usize),

    #[error("malformed file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::RecognitionFailed => Category::RecognitionFailed,
            Error::Io { .. } | Error::MissingMetadata(_) => Category::Io,
            Error::CorruptImage { .. }
            | Error::MalformedArff { .. }
            | Error::VersionMismatch { .. }
            | Error::CorruptModel(_)
            | Error::Format { .. } => Category::Format,
            _ => Category::Validation,
        }
    }
}
