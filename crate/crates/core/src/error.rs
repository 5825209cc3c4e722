use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("point is behind the camera (camera-frame depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("non-finite Kalman state after {0}")]
    NonFiniteState(&'static str),
    #[error("innovation covariance is ill-conditioned (condition number {0:e})")]
    SingularInnovation(f64),
    #[error("embedding {index} has zero norm")]
    ZeroVector { index: usize },
    #[error("embedding dimensions differ: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("input vector is not sorted ascending")]
    UnsortedInput,
    #[error("frame {got} arrives after frame {last}")]
    InvalidFrameOrder { last: u32, got: u32 },
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("index sets differ{}", frame.map(|f| format!(" at frame {f}")).unwrap_or_default())]
    MismatchedIndexSets { frame: Option<u32> },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{0}: file is empty")]
    EmptyFile(PathBuf),
    #[error("{path}: missing field `{field}`")]
    MissingField { path: PathBuf, field: String },
    #[error("{0}: bad magic, not an embedding file")]
    BadMagic(PathBuf),
    #[error("{path}: truncated at byte offset {offset}")]
    TruncatedFile { path: PathBuf, offset: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: u32,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_frame(frame: u32, source: Error) -> Self {
        match source {
            Error::AtFrame { .. } => source,
            other => Error::AtFrame {
                frame,
                source: Box::new(other),
            },
        }
    }

    /// True for errors caused by reading or decoding input files.
    pub fn is_io(&self) -> bool {
        if let Error::AtFrame { source, .. } = self {
            return source.is_io();
        }
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::EmptyFile(_)
                | Error::MissingField { .. }
                | Error::BadMagic(_)
                | Error::TruncatedFile { .. }
        )
    }
}
