//! Reinforcement-learning view of the simulator.
//!
//! Observation layout for a cluster of `N` nodes (all entries clipped to `[0, 1]`):
//!
//! | index          | feature                                            |
//! |----------------|----------------------------------------------------|
//! | `3i..3i+3`     | free cpu / mem / disk fraction of node `i`         |
//! | `3N`           | queue length / `queue_norm`                        |
//! | `3N+1..3N+4`   | task demand / mean node base capacity, per resource|
//! | `3N+4`         | task priority / `max_priority`                     |
//! | `3N+5`         | current dominant share of the task's tenant        |
//!
//! The action space has `N + 1` entries: assign to node `i`, or defer (last).

use serde::{Deserialize, Serialize};

use crate::sim::{ClusterConfig, ClusterState, Millis, ResourceVector, TaskId, TaskSpec, DIMS};
use crate::{Error, Result};

pub const EXTRA_FEATURES: usize = 6;

pub fn obs_dim(node_count: usize) -> usize {
    DIMS * node_count + EXTRA_FEATURES
}

pub fn action_dim(node_count: usize) -> usize {
    node_count + 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Feasibility of each action; the final entry (defer) is always allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionMask(pub Vec<bool>);

impl ActionMask {
    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn allows(&self, action: usize) -> bool {
        self.0.get(action).copied().unwrap_or(false)
    }

    pub fn defer_index(&self) -> usize {
        self.0.len() - 1
    }

    /// Indices of feasible node placements (excluding defer).
    pub fn feasible_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.0[..self.0.len() - 1]
            .iter()
            .enumerate()
            .filter(|(_, ok)| **ok)
            .map(|(i, _)| i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            a1: 1.0,
            a2: 1.0,
            a3: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.a1, self.a2, self.a3];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidConfig(format!("reward weights must be >= 0, got {w:?}")));
        }
        if w.iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidConfig("reward weights cannot all be zero".into()));
        }
        Ok(())
    }
}

/// Utilization, normalized delay and fairness loss, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub utilization: f64,
    pub delay: f64,
    pub fairness_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdpConfig {
    pub weights: RewardWeights,
    /// Delay normalizer; defaults to the trace's mean task duration.
    pub d_ref_ms: Option<f64>,
    /// Queue-length normalizer; defaults to twice the node count.
    pub queue_norm: Option<f64>,
    pub window_ms: Millis,
    pub max_priority: u8,
}

impl Default for MdpConfig {
    fn default() -> Self {
        MdpConfig {
            weights: RewardWeights::default(),
            d_ref_ms: None,
            queue_norm: None,
            window_ms: 10_000,
            max_priority: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureParams {
    pub queue_norm: f64,
    pub max_priority: u8,
}

/// MDP constants with defaults resolved against a concrete cluster and trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MdpParams {
    pub weights: RewardWeights,
    pub d_ref_ms: f64,
    pub window_ms: Millis,
    pub features: FeatureParams,
}

impl MdpConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if let Some(d) = self.d_ref_ms {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidConfig(format!("d_ref_ms must be > 0, got {d}")));
            }
        }
        if let Some(q) = self.queue_norm {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::InvalidConfig(format!("queue_norm must be > 0, got {q}")));
            }
        }
        if self.window_ms == 0 {
            return Err(Error::InvalidConfig("window_ms must be > 0".into()));
        }
        Ok(())
    }

    pub fn feature_params(&self, node_count: usize) -> FeatureParams {
        FeatureParams {
            queue_norm: self.queue_norm.unwrap_or(2.0 * node_count as f64),
            max_priority: self.max_priority,
        }
    }

    pub fn resolve(&self, cluster: &ClusterConfig, trace: &[TaskSpec]) -> Result<MdpParams> {
        self.validate()?;
        let d_ref_ms = match self.d_ref_ms {
            Some(d) => d,
            None if trace.is_empty() => 1.0,
            None => trace.iter().map(|t| t.duration as f64).sum::<f64>() / trace.len() as f64,
        };
        Ok(MdpParams {
            weights: self.weights,
            d_ref_ms,
            window_ms: self.window_ms,
            features: self.feature_params(cluster.node_count()),
        })
    }
}

fn clip01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

fn mean_base_capacity(state: &ClusterState) -> ResourceVector {
    let n = state.node_count() as f64;
    state
        .nodes()
        .iter()
        .fold(ResourceVector::ZERO, |acc, node| acc + node.base_capacity)
        .scale(1.0 / n)
}

pub fn featurize(state: &ClusterState, task: TaskId, params: &FeatureParams) -> Observation {
    let mut v = Vec::with_capacity(obs_dim(state.node_count()));
    for node in state.nodes() {
        let cap = node.effective_capacity().to_array();
        let free = node.free().to_array();
        for d in 0..DIMS {
            v.push(if cap[d] > 0.0 { clip01(free[d] / cap[d]) } else { 0.0 });
        }
    }
    v.push(clip01(state.queue().len() as f64 / params.queue_norm));

    let spec = &state.task(task).expect("decision task exists").spec;
    let mean_cap = mean_base_capacity(state).to_array();
    let demand = spec.demand.to_array();
    for d in 0..DIMS {
        v.push(if mean_cap[d] > 0.0 { clip01(demand[d] / mean_cap[d]) } else { 0.0 });
    }
    v.push(clip01(spec.priority as f64 / params.max_priority.max(1) as f64));
    v.push(clip01(state.tenant_dominant_share(spec.tenant_id)));
    Observation(v)
}

pub fn action_mask(state: &ClusterState, task: TaskId) -> ActionMask {
    let demand = state.task(task).expect("decision task exists").spec.demand;
    let mut mask: Vec<bool> = state.nodes().iter().map(|n| n.can_fit(task, &demand)).collect();
    mask.push(true);
    ActionMask(mask)
}

/// Jain's fairness index `(Σx)² / (n·Σx²)`; all-zero input counts as perfectly fair.
pub fn jain_index(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidConfig("fairness index needs at least one share".into()));
    }
    if let Some(neg) = x.iter().find(|v| **v < 0.0 || v.is_nan()) {
        return Err(Error::NegativeShare(*neg));
    }
    let sum: f64 = x.iter().sum();
    let sum_sq: f64 = x.iter().map(|v| v * v).sum();
    if sum_sq == 0.0 {
        return Ok(1.0);
    }
    Ok(sum * sum / (x.len() as f64 * sum_sq))
}

/// Fairness loss `1 - JFI` over per-tenant resource-time.
pub fn fairness_loss(shares: &[f64]) -> f64 {
    if shares.is_empty() {
        return 0.0;
    }
    clip01(1.0 - jain_index(shares).expect("shares are nonnegative"))
}

pub fn compute_reward_terms(state: &ClusterState, window_ms: Millis, d_ref_ms: f64) -> RewardTerms {
    let clock = state.clock();
    let mut total = 0.0;
    let mut count = 0usize;
    for id in state.queue() {
        let submit = state.task(*id).expect("queued task exists").spec.submit_time;
        total += (clock - submit) as f64;
        count += 1;
    }
    for d in state.recent_delays(window_ms) {
        total += d as f64;
        count += 1;
    }
    let mean_wait = if count == 0 { 0.0 } else { total / count as f64 };
    RewardTerms {
        utilization: state.utilization(),
        delay: clip01(mean_wait / d_ref_ms),
        fairness_loss: fairness_loss(state.tenant_resource_time()),
    }
}

pub fn reward(terms: &RewardTerms, w: &RewardWeights) -> f64 {
    w.a1 * terms.utilization - w.a2 * terms.delay - w.a3 * terms.fairness_loss
}
