use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("observation {0} is not valid for this grid")]
    UnknownObservation(String),

    #[error("non-finite symbol ({0}, {1})")]
    NonFiniteSymbol(f64, f64),

    #[error("training diverged at episode {episode}: non-finite parameters")]
    Divergence { episode: usize },

    #[error("source atom {0} is empty")]
    EmptyAtom(usize),

    #[error("every source atom is empty")]
    AllAtomsEmpty,

    #[error("insufficient samples: need at least 2 per side, got {source_count} source and {target_count} target")]
    InsufficientSamples { source_count: usize, target_count: usize },

    #[error("no valid (source, target) atom pair to fit")]
    NoValidPairs,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
