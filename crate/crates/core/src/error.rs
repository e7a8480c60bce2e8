use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point cloud")]
    EmptyCloud,

    #[error("cannot resample empty cloud")]
    ResampleEmpty,

    #[error("empty union of point sets")]
    EmptyPointSet,

    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("skeleton must have exactly 15 joints, got {0}")]
    JointCount(usize),

    #[error("sequence must contain at least one frame")]
    EmptySequence,

    #[error("timesteps must be strictly increasing (t={prev} followed by t={next})")]
    NonIncreasingTime { prev: u64, next: u64 },

    #[error("sequence mixes labeled and unlabeled frames")]
    MixedLabels,

    #[error("conversion requires skeleton labels")]
    Unlabeled,

    #[error("frame t={0} has no skeleton")]
    MissingSkeleton(u64),

    #[error("flow field length {flow} does not match cloud length {cloud}")]
    LengthMismatch { cloud: usize, flow: usize },

    #[error("degenerate skeleton for alignment")]
    DegenerateSkeleton,

    #[error("sequences are misaligned: {0}")]
    Misaligned(String),

    #[error("invalid configuration value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for malformed input and I/O failures, as opposed to well-formed
    /// input that violates a contract (unlabeled data, misaligned sequences).
    pub fn is_parse_or_io(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Io { .. } | Error::Config { .. })
    }
}
