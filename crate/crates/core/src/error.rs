use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite parameters on gaussian {index}")]
    Render { index: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("depth map has no valid pixels")]
    EmptyDepth,

    #[error("cannot initialize from an empty point set")]
    EmptyInit,

    #[error("failed to load dataset entry `{entry}`: {reason}")]
    Load { entry: String, reason: String },

    #[error("{stage} stage diverged: non-finite loss at iteration {iteration}")]
    Diverged { stage: String, iteration: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
