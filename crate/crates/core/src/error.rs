use thiserror::Error;

/// Errors surfaced by planners, the simulator and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller passed containers whose lengths disagree with the model.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A numeric input (state, control, parameter) was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Every rollout of a batch was killed by a hard constraint.
    #[error("no feasible sample: all {0} rollouts were killed by hard constraints")]
    NoFeasibleSample(usize),

    /// The iLQG nominal trajectory produced a non-finite cost.
    #[error("non-finite cost along iLQG nominal trajectory at step {step}")]
    IlqgNonFinite { step: usize },

    /// Scenario file could not be parsed (message carries line/column).
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// Scenario file parsed but violates an invariant.
    #[error("invalid config: {field}: {message}")]
    ConfigInvalid { field: String, message: String },

    /// Filesystem trouble while reading configs or writing logs/tables.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A result table could not be read back (bad header or cell).
    #[error("table parse error: {0}")]
    TableParse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            message: message.into(),
        }
    }
}
