use serde::{Deserialize, Serialize};

use super::{Millis, NodeId, ResourceVector, TaskId, TenantId};
use crate::{Error, Result};

/// Static description of a task as submitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub tenant_id: TenantId,
    pub priority: u8,
    pub submit_time: Millis,
    pub duration: Millis,
    pub demand: ResourceVector,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidTask {
            task: self.task_id,
            reason: reason.to_string(),
        };
        if self.duration == 0 {
            return Err(invalid("duration must be positive"));
        }
        if !self.demand.is_valid() {
            return Err(invalid("demand components must be finite and nonnegative"));
        }
        if !self.demand.any_positive() {
            return Err(invalid("demand must have a positive component"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskPhase {
    Queued,
    Running { node: NodeId, start: Millis },
    Completed { node: NodeId, start: Millis, end: Millis },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskRuntime {
    pub spec: TaskSpec,
    pub phase: TaskPhase,
}

impl TaskRuntime {
    pub fn start_time(&self) -> Option<Millis> {
        match self.phase {
            TaskPhase::Queued => None,
            TaskPhase::Running { start, .. } | TaskPhase::Completed { start, .. } => Some(start),
        }
    }

    /// Queueing delay, once the task has started.
    pub fn delay(&self) -> Option<Millis> {
        self.start_time().map(|s| s - self.spec.submit_time)
    }
}
