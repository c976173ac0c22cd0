use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read image {path}: {source}")]
    ImageRead {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("unsupported image format for {0} (expected PNG, JPEG or BMP)")]
    UnsupportedFormat(PathBuf),
    #[error("image has zero width or height")]
    EmptyImage,
    #[error("pixel scale must be a positive number of µm per pixel, got {0}")]
    InvalidScale(f64),
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("unknown component label {0}")]
    UnknownLabel(u32),
    #[error("component {0} has no pixels")]
    EmptyComponent(u32),
    #[error("contiguity is undefined when both interface counts are zero")]
    UndefinedContiguity,
    #[error("neck {index} leaves the particle phase at ({x}, {y})")]
    InfeasibleNeck { index: usize, x: i32, y: i32 },
    #[error("no particles found")]
    NoParticles,
    #[error("synthetic spec line {line}: {reason}")]
    SpecSyntax { line: usize, reason: String },
    #[error("synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("could not place item {0} without violating the spacing constraints")]
    Placement(usize),
    #[error("cannot write image {path}: {source}")]
    ImageWrite {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
