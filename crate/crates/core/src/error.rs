use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("test interactions duplicated in train for {} (user, item) pairs: {}", offenders.len(), format_pairs(offenders))]
    TrainTestOverlap { offenders: Vec<(u32, u32)> },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("unknown node: {0}")]
    Lookup(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

fn format_pairs(pairs: &[(u32, u32)]) -> String {
    const SHOWN: usize = 10;
    let mut out = pairs
        .iter()
        .take(SHOWN)
        .map(|(u, i)| format!("({u}, {i})"))
        .collect::<Vec<_>>()
        .join(", ");
    if pairs.len() > SHOWN {
        out.push_str(", ...");
    }
    out
}
