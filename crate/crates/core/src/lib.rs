//! Data-driven next-step hints for Scratch projects.
//!
//! A student project is parsed into a normalized tree, compared against a
//! pool of passing peer solutions with pq-gram distance, and the nearest
//! peer is diffed against it to produce edit hints.

pub mod analysis;
pub mod ast;
pub mod cli;
pub mod differ;
pub mod hinter;
pub mod matcher;
pub mod pipeline;
pub mod pool;
pub mod pqgram;
pub mod sb3;
pub mod stats;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] sb3::ParseError),
    #[error(transparent)]
    Serialize(#[from] sb3::SerializeError),
    #[error(transparent)]
    PqGram(#[from] pqgram::PqGramError),
    #[error(transparent)]
    Pool(#[from] pool::PoolError),
    #[error(transparent)]
    Apply(#[from] hinter::ApplyError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid hints file: {0}")]
    InvalidHints(String),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for unreadable input, 3 when no candidate
    /// passes the threshold, 4 for hints that do not fit the source.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Pool(pool::PoolError::NoCandidates) => 3,
            Error::Apply(_)
            | Error::InvalidHints(_)
            | Error::Serialize(sb3::SerializeError::UnserializableNode { .. }) => 4,
            _ => 2,
        }
    }
}
