use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box has a non-finite coordinate")]
    NonFinite,
    #[error("box has negative size ({w} x {h})")]
    NegativeSize { w: f64, h: f64 },
    #[error("covariance is not symmetric positive semidefinite")]
    NotPsd,
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeatmapError {
    #[error("heatmap dimensions must be >= 1, got {channels}x{height}x{width}")]
    InvalidDims {
        channels: usize,
        height: usize,
        width: usize,
    },
    #[error("value buffer has {got} entries, expected {expected}")]
    BufferLength { expected: usize, got: usize },
    #[error("value {value} at index {index} is outside [0, 1]")]
    InvalidValue { index: usize, value: f32 },
    #[error("category {category} out of range for {channels} channels")]
    CategoryOutOfRange { category: usize, channels: usize },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("no size available for peak at ({x}, {y}) in channel {channel}")]
    MissingSize { channel: usize, x: usize, y: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LsmError {
    #[error("invalid LSM config: {0}")]
    InvalidConfig(String),
    #[error("region has zero area")]
    EmptyRegion,
    #[error("target size must be positive, got {0} x {1}")]
    InvalidTarget(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticError {
    #[error("invalid scene config: {0}")]
    InvalidScene(String),
    #[error("invalid detector config: {0}")]
    InvalidDetector(String),
}

/// Failures reading or writing the on-disk formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Annotation { line: usize, message: String },
    #[error("bad heatmap magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("heatmap truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: u64, got: u64 },
    #[error("heatmap has {0} trailing bytes")]
    TrailingBytes(u64),
    #[error("heatmap dimensions overflow: {channels}x{height}x{width}")]
    DimsOverflow {
        channels: u32,
        height: u32,
        width: u32,
    },
    #[error("invalid heatmap: {0}")]
    Heatmap(#[from] HeatmapError),
    #[error("field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("malformed JSON: {0}")]
    Json(String),
}

impl FormatError {
    /// True for errors caused by the filesystem rather than file contents.
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }
}
