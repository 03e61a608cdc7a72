use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty graph: no read produced two adjacent k-mers")]
    EmptyGraph,

    #[error("node {0} has no outgoing edges")]
    DeadEnd(u32),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {path}: run the `{stage}` stage first")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("incompatible artifact: {0}")]
    Incompatible(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("read cannot be embedded: {0}")]
    Unembeddable(String),

    #[error("input of {len} tokens exceeds max_tokens={max}; split the read into windows")]
    TooLong { len: usize, max: usize },

    #[error("artifact directory {0} is locked by another stage")]
    Locked(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad input or configuration rather than a failure at
    /// run time. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::MissingArtifact { .. } | Error::Incompatible(_)
        )
    }
}
