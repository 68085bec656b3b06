use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The configuration document is not well-formed.
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    /// A rule or declaration names an id that was never declared.
    #[error("{kind} `{id}` is referenced but never declared")]
    UnknownReference { kind: &'static str, id: String },

    #[error("duplicate {kind} `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("unknown actuator kind `{0}`")]
    UnknownActuatorKind(String),

    #[error("unknown action `{action}` for actuator kind `{kind}`")]
    UnknownAction { kind: String, action: String },

    #[error("unknown sensor kind `{0}`")]
    UnknownSensorKind(String),

    #[error("tick {got} arrived after tick {last}")]
    OutOfOrder { last: u64, got: u64 },

    #[error("event {event} is stamped {time} but was fed at tick {tick}")]
    EventTimeMismatch { event: u64, time: u64, tick: u64 },

    #[error("line {line}: {message}")]
    Trace { line: u64, message: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn unknown(kind: &'static str, id: impl Into<String>) -> Self {
        Error::UnknownReference {
            kind,
            id: id.into(),
        }
    }

    pub(crate) fn duplicate(kind: &'static str, id: impl Into<String>) -> Self {
        Error::DuplicateId {
            kind,
            id: id.into(),
        }
    }
}
