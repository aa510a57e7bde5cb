use thiserror::Error;

/// Errors raised anywhere in the survey pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("missing field: {0}")]
    Missing(&'static str),

    #[error("time {t} outside trajectory range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("{pass}: filter lost at epoch {epoch} (all particle weights are zero)")]
    FilterLost { pass: String, epoch: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no shared access points between observation and maps")]
    NoSharedAps,

    #[error("maps have disjoint coverage")]
    DisjointCoverage,

    #[error("walk leg {leg} crosses a wall")]
    LegCrossesWall { leg: usize },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}
