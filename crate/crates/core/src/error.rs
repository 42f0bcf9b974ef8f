use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("demand {demand} is outside 0..={pie}")]
    DemandOutOfRange { demand: u32, pie: u32 },

    #[error("invalid game configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("observation trace is empty")]
    EmptyTrace,

    #[error("unknown proposer id {0}")]
    UnknownProposer(usize),

    #[error("requested {requested} rounds but the log only has {available}")]
    RoundsUnavailable { requested: usize, available: usize },

    #[error("round {0} is not in the log")]
    RoundOutOfRange(usize),

    #[error("empty norm range [{lo}, {hi}]")]
    EmptyNormRange { lo: u32, hi: u32 },

    #[error("config file {path}: {msg}")]
    ConfigFile { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
