use thiserror::Error;

use crate::model::{MatchingViolation, WorkerId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("population size must be even and at least 2, got {0}")]
    OddPopulation(usize),

    #[error("probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),

    #[error("invalid matching: {0}")]
    InvalidMatching(MatchingViolation),

    #[error("outcome for pair ({i}, {j}) with score {score} contradicts current knowledge")]
    Inconsistent { i: WorkerId, j: WorkerId, score: u8 },

    #[error("unknown graph is not a disjoint union of cliques (component containing worker {0})")]
    NotACliquePartition(WorkerId),

    #[error("component of size {size} exceeds the enumeration cap of {cap}")]
    ComponentTooLarge { size: usize, cap: usize },

    #[error("instance of size {size} exceeds the oracle cap of {cap}")]
    SizeCapExceeded { size: usize, cap: usize },

    #[error("policy invariant violated: {0}")]
    InvariantViolation(String),

    #[error("policy `{policy}` is not defined for the {model} model")]
    ModelMismatch { policy: String, model: String },

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("unknown feedback model `{0}`")]
    UnknownModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("policy did not absorb within {0} steps")]
    NonAbsorbing(usize),

    #[error("replication {replication} (seed {seed}) failed: {source}")]
    Replication {
        replication: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
