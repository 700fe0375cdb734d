use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A NaN or infinity appeared while computing a node value.
    #[error("numeric failure at node {node} ({op})")]
    Numeric { node: usize, op: &'static str },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("convexity violation: {0}")]
    Convexity(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("training step {step} failed: {source}")]
    Training { step: u64, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for failures caused by non-finite values, including those
    /// wrapped with a training step.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric { .. } => true,
            Error::Training { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
