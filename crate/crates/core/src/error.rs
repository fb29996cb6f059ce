use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate scan point: axle distance {distance:e} m is below the floor")]
    DegeneratePoint { distance: f64 },

    #[error("point {index} is outside the safe set (margin {margin:e} m)")]
    OutsideSafeSet { index: usize, margin: f64 },

    #[error("barrier gradient norm {norm:e} is below the floor while the constraint is active")]
    GradientDegenerate { norm: f64 },

    #[error("sensor is inside obstacle primitive {primitive}")]
    SensorEmbedded { primitive: usize },

    #[error("need at least 2 increments, got {0}")]
    InsufficientData(usize),

    #[error("unknown scenario `{0}` (expected one of exp1d, exp1n, exp2d, exp2n)")]
    UnknownScenario(String),

    #[error("initial state is not admissible: {0}")]
    InvalidInitialState(Box<Error>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
