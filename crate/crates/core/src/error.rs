use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("pipeline has no initial model; run bootstrap first")]
    NotBootstrapped,

    #[error("bootstrap epoch produced a single class after {attempts} attempts")]
    DegenerateBootstrap { attempts: usize },

    #[error("timeline is empty")]
    EmptyTimeline,

    #[error("timelines are not paired: {0}")]
    IncomparableTimelines(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("storage failure at {path}: {source}")]
    StorageFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record: {0}")]
    Parse(String),
}

impl Error {
    pub fn storage(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::StorageFailure {
            path: path.into(),
            source,
        }
    }
}
