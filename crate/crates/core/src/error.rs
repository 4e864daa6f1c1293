use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A flow-conservation equality does not hold.
    #[error("infeasible assignment at detection {det_id} (index {detection}): {side} flow {flow} != det {det}")]
    Infeasible {
        detection: usize,
        det_id: u64,
        side: FlowSide,
        flow: u8,
        det: u8,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("instance too large for exhaustive search: {free_bits} free bits (cap {cap})")]
    TooLarge { free_bits: usize, cap: usize },

    #[error("negative cycle in residual network through nodes {0:?}")]
    NegativeCycle(Vec<usize>),

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize, trace: Vec<f64> },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which of the two per-detection equalities failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowSide {
    /// `new + sum(incoming links) = det`
    Incoming,
    /// `end + sum(outgoing links) = det`
    Outgoing,
}

impl std::fmt::Display for FlowSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowSide::Incoming => f.write_str("incoming"),
            FlowSide::Outgoing => f.write_str("outgoing"),
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
