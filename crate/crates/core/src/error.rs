use crate::sim::{NodeId, TaskId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate task id {0} in trace")]
    DuplicateTask(TaskId),

    #[error("invalid cluster configuration: {0}")]
    InvalidCluster(String),

    #[error("invalid task {task}: {reason}")]
    InvalidTask { task: TaskId, reason: String },

    #[error("task {task} does not fit on node {node}")]
    InfeasibleAction { task: TaskId, node: NodeId },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("task {0} is not the pending decision task")]
    NotDecisionTask(TaskId),

    #[error("trace line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("negative input to fairness index: {0}")]
    NegativeShare(f64),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("action mask has no allowed action")]
    EmptyMask,

    #[error("action {0} is masked out")]
    MaskedAction(usize),

    #[error("non-finite gradient; optimizer step aborted")]
    NonFiniteGradient,

    #[error("non-finite loss during update {update}: {diagnostics}")]
    NonFiniteLoss { update: usize, diagnostics: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
