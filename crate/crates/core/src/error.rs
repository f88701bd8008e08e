use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty window [{t_start_ps}, {t_end_ps}) ps: normalization is zero")]
    EmptyWindow { t_start_ps: f64, t_end_ps: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("missing projection settings: {0:?}")]
    MissingSettings(Vec<usize>),

    #[error("run aborted after {events} events: {reason}")]
    ResourceExhausted { events: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
