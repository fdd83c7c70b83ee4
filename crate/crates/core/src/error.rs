use thiserror::Error;

use crate::types::{Hash32, MsgId, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("{node} already called Get at tick {tick}")]
    RateLimitExceeded { node: NodeId, tick: u64 },
    #[error("{node} presented a unit that is not an earlier unit of input {input:?} at tick {tick}")]
    StaleChain { node: NodeId, tick: u64, input: Hash32 },
    #[error("Peek is not available in plain mode")]
    PeekInPlainMode,
    #[error("{node} peeked at {input:?} at tick {tick} without a completing commitment")]
    PeekWithoutCommitment { node: NodeId, tick: u64, input: Hash32 },
    #[error("{node} peeked at {input:?} at tick {tick} but its coffer holds an unfinished peeked result")]
    RecursivePeek { node: NodeId, tick: u64, input: Hash32 },
    #[error("peek at {input:?} in step {step} was not completed within the step")]
    CommitmentBroken { step: u64, input: Hash32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("coffer references unknown message {0:?}")]
    DanglingCofferRef(MsgId),
    #[error("message {0:?} has no sender attribution in the trace")]
    UnknownSender(MsgId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("{node} is not active in step {step}")]
    InactiveNode { node: NodeId, step: u64 },
    #[error("illegal strategy action at tick {tick}: {reason}")]
    IllegalStrategyAction { tick: u64, reason: String },
    #[error("environment rejected: {0}")]
    InvalidEnvironment(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("shell exhaustion: {0}")]
    ShellExhaustion(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("input trace unusable: {0}")]
    BadInput(String),
}
