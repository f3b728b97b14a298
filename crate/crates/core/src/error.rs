use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("capacity error: {cells} cells exceed the cap of {cap}")]
    Capacity { cells: usize, cap: usize },
    #[error("insufficient data: requested {requested}, available {available}")]
    InsufficientData { requested: usize, available: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("fit diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("episode {episode}, step {step}: {source}")]
    AtStep {
        episode: usize,
        step: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Tags an error with the episode and step where it happened.
    pub fn at(self, episode: usize, step: usize) -> Self {
        Error::AtStep {
            episode,
            step,
            source: alloc::boxed::Box::new(self),
        }
    }
}
