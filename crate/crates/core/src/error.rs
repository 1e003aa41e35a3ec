use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected n={expected_n} pitch={expected_pitch}, found n={found_n} pitch={found_pitch}")]
    GridMismatch {
        expected_n: usize,
        expected_pitch: f64,
        found_n: usize,
        found_pitch: f64,
    },

    #[error("lateral shift ({dx}, {dy}) exceeds the supported range of {limit} wavelengths")]
    ShiftOutOfRange { dx: f64, dy: f64, limit: f64 },

    #[error("non-positive propagation distance {distance} between plane {from} and plane {to}; axial misalignment too large for this geometry")]
    Regime { from: usize, to: usize, distance: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("layer index {index} out of range (network has {num_layers} layers)")]
    LayerIndex { index: usize, num_layers: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{path}: wrong magic number: expected {expected:#010x}, found {found:#010x}", path = .path.display())]
    WrongMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated file: {detail}", path = .path.display())]
    Truncated { path: PathBuf, detail: String },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelRange { label: usize, num_classes: usize },

    #[error("{path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
