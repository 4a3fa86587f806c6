//! Error taxonomy shared by the library and the CLI.
//!
//! Errors fall into three classes that map onto process exit codes:
//! contract errors (2) for misuse of an operation, data errors (3) for
//! invalid or inconsistent inputs, and capacity errors (4) for requests
//! that exceed what the implementation is willing to compute.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation was invoked outside its contract (bad arguments,
    /// empty inputs, unknown identifiers).
    #[error("contract error: {0}")]
    Contract(String),

    /// A domain definition is structurally invalid (cyclic prerequisite
    /// graph, empty concept list, duplicate identifiers).
    #[error("structural error: {0}")]
    Structure(String),

    /// An input file or dataset is malformed or internally inconsistent.
    #[error("data error: {0}")]
    Data(String),

    /// The request is well-formed but too large to compute exactly.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// An observation had probability zero under every pattern.
    #[error("impossible evidence: observation {observation} on question {question} has probability 0 under every pattern")]
    ImpossibleEvidence { question: String, observation: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 2 contract, 3 data, 4 capacity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) => 2,
            Error::Structure(_) | Error::Data(_) | Error::Io { .. } => 3,
            Error::Capacity(_) => 4,
            Error::ImpossibleEvidence { .. } => 3,
        }
    }
}
