use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the sensing pipeline.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("cannot read {path}: {source}")]
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

    #[error("appearance length mismatch: sidecar holds {got} trailing floats, records must be exactly {expected}")]
    AppearanceLength { got: usize, expected: usize },

    #[error("appearance sidecar has {records} records but the detection file has {detections} detections")]
    AppearanceCount { records: usize, detections: usize },

    #[error("frame indices must be non-decreasing: frame {got} after frame {last}")]
    NonMonotoneFrames { last: u64, got: u64 },

    #[error("frame index regression: already processed frame {last}, received frame {got}")]
    FrameRegression { last: u64, got: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("point is behind the camera (Z_c = {z_c})")]
    BehindCamera { z_c: f64 },

    #[error("viewing ray does not meet the ground plane in front of the camera")]
    Horizon,

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid camera model: {0}")]
    InvalidCamera(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown configuration key `{0}`")]
    UnknownConfigKey(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("evaluation is undefined: {0}")]
    UndefinedMetric(String),

    #[error("invalid zone `{zone_id}`: {message}")]
    InvalidZone { zone_id: String, message: String },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
