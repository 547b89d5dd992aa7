//! Deterministic discrete-event simulation of a multi-tenant cluster.
//!
//! The simulator is driven from the outside by alternating
//! [`ClusterState::next_decision`] and [`ClusterState::apply_action`]: each
//! decision point exposes the task at the head of the queue, and the caller
//! either places it on a node or defers it to the back of the queue.

mod cluster;
mod event;
mod resources;
mod task;

use serde::{Deserialize, Serialize};

pub use cluster::{Action, ClusterState, Decision, MetricsSnapshot, NodeState};
pub use event::{EventKind, EventQueue, SimEvent};
pub use resources::{ResourceVector, DIMS};
pub use task::{TaskPhase, TaskRuntime, TaskSpec};

pub type TaskId = u64;
pub type TenantId = u32;
pub type NodeId = usize;
/// Simulated time in milliseconds.
pub type Millis = u64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Base capacity of each node, indexed by node id.
    pub nodes: Vec<ResourceVector>,
    /// Tenants known up front. Tenants seen only in the trace are added.
    #[serde(default)]
    pub tenants: Vec<TenantId>,
}

impl ClusterConfig {
    pub fn uniform(node_count: usize, capacity: ResourceVector, tenants: Vec<TenantId>) -> Self {
        ClusterConfig {
            nodes: vec![capacity; node_count],
            tenants,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}
