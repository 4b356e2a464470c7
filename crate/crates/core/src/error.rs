use thiserror::Error;

use crate::cluster::{InstanceId, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// An allocation would overflow a node. The filter is supposed to make
    /// this unreachable, so seeing it means a scheduler bug.
    #[error("capacity exceeded on node {node} while allocating instance {instance}")]
    Capacity { node: NodeId, instance: InstanceId },

    #[error("instance {instance} is not resident on node {node}")]
    NotResident { node: NodeId, instance: InstanceId },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("instance {0} is already placed")]
    AlreadyPlaced(InstanceId),

    #[error("cannot sample {requested} items from a population of {available}")]
    Sampling { requested: usize, available: usize },

    #[error("score called with an empty candidate list")]
    EmptyCandidates,

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Manifest(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
