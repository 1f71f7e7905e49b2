use thiserror::Error;

use crate::semantics::term::ActorRef;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("invalid actor reference `{0}`")]
    InvalidActorRef(String),
    #[error("no transition form matches term `{0}`")]
    Shape(String),
    #[error("deterministic program enabled {count} transitions for `{term}`")]
    Nondeterministic { term: String, count: usize },
    #[error("actor {0} is already running a process")]
    Busy(ActorRef),
    #[error("request {0} is not valid: its caller is no longer waiting")]
    InvalidRequest(u64),
    #[error("request {0} is not pending in the flow")]
    NotPending(u64),
    #[error("request {0} already holds a response")]
    AlreadyResponded(u64),
    #[error("actor {0} has no process")]
    NoProcess(ActorRef),
    #[error("transition does not match the current process: {0}")]
    NoMatchingTransition(String),
    #[error("persistent state guard mismatch for {0}")]
    GuardMismatch(ActorRef),
    #[error("fresh request id {0} already present in the flow")]
    IdCollision(u64),
    #[error("rule is not enabled: {0}")]
    NotEnabled(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct TableError {
    pub line: usize,
    pub message: String,
}

impl TableError {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        TableError { line, message: message.into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FabricError {
    #[error("fabric is frozen for reconciliation")]
    Frozen,
    #[error("fabric is not frozen")]
    NotFrozen,
    #[error("partition {0} does not exist or was purged")]
    NoPartition(usize),
    #[error("partition {0} is still assigned to a live component")]
    StillAssigned(usize),
    #[error("component {0} is not assigned a partition")]
    Unassigned(String),
    #[error("unknown component {0}")]
    UnknownComponent(String),
    #[error("component {0} is already a member")]
    AlreadyMember(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlacementError {
    #[error("component {component} cannot host actor type {actor_type}")]
    Incapable { component: String, actor_type: String },
    #[error("no live component offers {0}")]
    NoRoute(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("unknown program `{0}`")]
    UnknownProgram(String),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace has no header record")]
    MissingHeader,
}
