use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    ClusterConfig, EventKind, EventQueue, Millis, NodeId, ResourceVector, SimEvent, TaskId, TaskPhase,
    TaskRuntime, TaskSpec, TenantId, DIMS,
};
use crate::mdp::jain_index;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct NodeState {
    pub node_id: NodeId,
    pub base_capacity: ResourceVector,
    /// Current fluctuation factor in (0, 1].
    pub capacity_scale: f64,
    pub allocated: ResourceVector,
    /// Demands of the running tasks, keyed by task id.
    running: BTreeMap<TaskId, ResourceVector>,
    /// Set when a capacity drop left the node above its effective capacity.
    oversubscribed: bool,
}

impl NodeState {
    fn new(node_id: NodeId, base_capacity: ResourceVector) -> Self {
        NodeState {
            node_id,
            base_capacity,
            capacity_scale: 1.0,
            allocated: ResourceVector::ZERO,
            running: BTreeMap::new(),
            oversubscribed: false,
        }
    }

    pub fn effective_capacity(&self) -> ResourceVector {
        self.base_capacity.scale(self.capacity_scale)
    }

    pub fn free(&self) -> ResourceVector {
        self.effective_capacity().saturating_sub(&self.allocated)
    }

    pub fn running_tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.running.keys().copied()
    }

    pub fn is_oversubscribed(&self) -> bool {
        self.oversubscribed
    }

    /// Mean allocated fraction over dimensions with nonzero effective capacity.
    pub fn load(&self) -> f64 {
        let cap = self.effective_capacity().to_array();
        let alloc = self.allocated.to_array();
        let (sum, n) = (0..DIMS)
            .filter(|&d| cap[d] > 0.0)
            .fold((0.0, 0usize), |(s, n), d| (s + (alloc[d] / cap[d]).min(1.0), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    // Allocation summed in task-id order, optionally including one extra task.
    // Every allocation update goes through here so that `allocated` always
    // equals the ordered sum of running demands bit for bit.
    fn allocation_with(&self, extra: Option<(TaskId, ResourceVector)>) -> ResourceVector {
        let mut total = ResourceVector::ZERO;
        let mut extra = extra;
        for (&id, &d) in &self.running {
            if let Some((eid, ed)) = extra {
                if eid < id {
                    total += ed;
                    extra = None;
                }
            }
            total += d;
        }
        if let Some((_, ed)) = extra {
            total += ed;
        }
        total
    }

    /// Whether `demand` (for task `task`) fits in the free effective capacity.
    pub fn can_fit(&self, task: TaskId, demand: &ResourceVector) -> bool {
        if self.oversubscribed {
            return false;
        }
        self.allocation_with(Some((task, *demand)))
            .fits_within(&self.effective_capacity())
    }

    fn refresh(&mut self) {
        self.allocated = self.allocation_with(None);
        self.oversubscribed = !self.allocated.fits_within(&self.effective_capacity());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Assign(NodeId),
    Defer,
}

impl Action {
    /// Flat action index: `0..nodes` assign, `nodes` defers.
    pub fn index(self, node_count: usize) -> usize {
        match self {
            Action::Assign(n) => n,
            Action::Defer => node_count,
        }
    }

    pub fn from_index(index: usize, node_count: usize) -> Action {
        if index >= node_count {
            Action::Defer
        } else {
            Action::Assign(index)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub clock_ms: Millis,
    pub completed: usize,
    /// Tasks still queued or running when the snapshot was taken.
    pub unfinished: usize,
    pub mean_delay_ms: f64,
    pub utilization_time_avg: f64,
    pub jfi_final: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    Pending { clock: Millis, task: TaskId },
    Done(MetricsSnapshot),
}

pub struct ClusterState {
    clock: Millis,
    nodes: Vec<NodeState>,
    queue: VecDeque<TaskId>,
    tasks: BTreeMap<TaskId, TaskRuntime>,
    events: EventQueue,
    tenants: Vec<TenantId>,
    tenant_index: BTreeMap<TenantId, usize>,
    total_capacity: ResourceVector,

    // per-tenant accounting, indexed like `tenants`
    tenant_alloc: Vec<ResourceVector>,
    tenant_running: Vec<usize>,
    tenant_queued: Vec<usize>,
    tenant_dom_rate: Vec<f64>,
    tenant_resource_time: Vec<f64>,

    deferred: BTreeSet<TaskId>,
    stalled: bool,

    arrived: usize,
    running: usize,
    completed: usize,
    completed_delay_sum: f64,
    util_integral: f64,
    // (start time, queueing delay) in start order
    start_log: Vec<(Millis, Millis)>,
}

impl ClusterState {
    pub fn new(config: &ClusterConfig, trace: &[TaskSpec]) -> Result<Self> {
        if config.nodes.is_empty() {
            return Err(Error::InvalidCluster("at least one node is required".into()));
        }
        for (i, cap) in config.nodes.iter().enumerate() {
            if !cap.is_valid() || !cap.any_positive() {
                return Err(Error::InvalidCluster(format!(
                    "node {i} has non-positive capacity {cap:?}"
                )));
            }
        }

        let mut seen = BTreeSet::new();
        for spec in trace {
            if !seen.insert(spec.task_id) {
                return Err(Error::DuplicateTask(spec.task_id));
            }
            spec.validate()?;
        }

        let tenants: Vec<TenantId> = config
            .tenants
            .iter()
            .copied()
            .chain(trace.iter().map(|t| t.tenant_id))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let tenant_index = tenants.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        let nt = tenants.len();

        let nodes: Vec<NodeState> = config
            .nodes
            .iter()
            .enumerate()
            .map(|(i, cap)| NodeState::new(i, *cap))
            .collect();
        let total_capacity = config
            .nodes
            .iter()
            .fold(ResourceVector::ZERO, |acc, c| acc + *c);

        let mut sorted: Vec<&TaskSpec> = trace.iter().collect();
        sorted.sort_by_key(|t| (t.submit_time, t.task_id));
        let mut events = EventQueue::default();
        for spec in sorted {
            events.push(SimEvent {
                time: spec.submit_time,
                kind: EventKind::Arrival(spec.clone()),
            });
        }

        Ok(ClusterState {
            clock: 0,
            nodes,
            queue: VecDeque::new(),
            tasks: BTreeMap::new(),
            events,
            tenants,
            tenant_index,
            total_capacity,
            tenant_alloc: vec![ResourceVector::ZERO; nt],
            tenant_running: vec![0; nt],
            tenant_queued: vec![0; nt],
            tenant_dom_rate: vec![0.0; nt],
            tenant_resource_time: vec![0.0; nt],
            deferred: BTreeSet::new(),
            stalled: false,
            arrived: 0,
            running: 0,
            completed: 0,
            completed_delay_sum: 0.0,
            util_integral: 0.0,
            start_log: Vec::new(),
        })
    }

    /// Schedule capacity changes (e.g. from a fluctuation generator).
    pub fn schedule_events(&mut self, events: impl IntoIterator<Item = SimEvent>) -> Result<()> {
        for ev in events {
            match ev.kind {
                EventKind::CapacityChange { node, scale } => {
                    if node >= self.nodes.len() {
                        return Err(Error::UnknownNode(node));
                    }
                    if !(scale > 0.0 && scale <= 1.0) {
                        return Err(Error::InvalidCluster(format!(
                            "capacity scale {scale} outside (0, 1]"
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidConfig(
                        "only capacity changes can be scheduled externally".into(),
                    ))
                }
            }
            if ev.time < self.clock {
                return Err(Error::InvalidConfig(format!(
                    "event at {} is before the clock {}",
                    ev.time, self.clock
                )));
            }
            self.events.push(ev);
        }
        Ok(())
    }

    pub fn clock(&self) -> Millis {
        self.clock
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn queue(&self) -> &VecDeque<TaskId> {
        &self.queue
    }

    pub fn task(&self, id: TaskId) -> Option<&TaskRuntime> {
        self.tasks.get(&id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskRuntime> {
        self.tasks.values()
    }

    pub fn tenants(&self) -> &[TenantId] {
        &self.tenants
    }

    pub fn tenant_slot(&self, tenant: TenantId) -> Option<usize> {
        self.tenant_index.get(&tenant).copied()
    }

    pub fn total_capacity(&self) -> ResourceVector {
        self.total_capacity
    }

    pub fn pending_events(&self) -> Vec<&SimEvent> {
        self.events.sorted()
    }

    pub fn arrived(&self) -> usize {
        self.arrived
    }

    pub fn running_count(&self) -> usize {
        self.running
    }

    pub fn completed_count(&self) -> usize {
        self.completed
    }

    pub fn is_stalled(&self) -> bool {
        self.stalled
    }

    /// Current dominant share of a tenant relative to total base capacity.
    pub fn tenant_dominant_share(&self, tenant: TenantId) -> f64 {
        self.tenant_slot(tenant)
            .map(|i| self.tenant_alloc[i].dominant_share(&self.total_capacity))
            .unwrap_or(0.0)
    }

    pub fn tenant_queued(&self, tenant: TenantId) -> usize {
        self.tenant_slot(tenant).map(|i| self.tenant_queued[i]).unwrap_or(0)
    }

    /// Per-tenant cumulative dominant-resource-time up to the clock, in `tenants()` order.
    pub fn tenant_resource_time(&self) -> &[f64] {
        &self.tenant_resource_time
    }

    /// Per-tenant dominant-resource-time accrued inside `[from, to)`, from task records.
    pub fn tenant_resource_time_between(&self, from: Millis, to: Millis) -> Vec<f64> {
        let mut out = vec![0.0; self.tenants.len()];
        for t in self.tasks.values() {
            let (start, end) = match t.phase {
                TaskPhase::Queued => continue,
                TaskPhase::Running { start, .. } => (start, self.clock),
                TaskPhase::Completed { start, end, .. } => (start, end),
            };
            let lo = start.max(from);
            let hi = end.min(to);
            if hi > lo {
                let slot = self.tenant_index[&t.spec.tenant_id];
                out[slot] += t.spec.demand.dominant_share(&self.total_capacity) * (hi - lo) as f64;
            }
        }
        out
    }

    /// Queueing delays of tasks that started within `(clock - window, clock]`.
    pub fn recent_delays(&self, window: Millis) -> impl Iterator<Item = Millis> + '_ {
        let floor = self.clock.saturating_sub(window);
        let from = if self.clock < window {
            0
        } else {
            self.start_log.partition_point(|(s, _)| *s <= floor)
        };
        self.start_log[from..].iter().map(|(_, d)| *d)
    }

    /// Instantaneous mean allocated fraction over nodes and dimensions.
    pub fn utilization(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for node in &self.nodes {
            let cap = node.effective_capacity().to_array();
            let alloc = node.allocated.to_array();
            for d in 0..DIMS {
                if cap[d] > 0.0 {
                    sum += (alloc[d] / cap[d]).min(1.0);
                    n += 1;
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn episode_metrics(&self) -> MetricsSnapshot {
        let mean_delay_ms = if self.completed == 0 {
            0.0
        } else {
            self.completed_delay_sum / self.completed as f64
        };
        let utilization_time_avg = if self.clock == 0 {
            0.0
        } else {
            self.util_integral / self.clock as f64
        };
        let jfi_final = if self.tenants.is_empty() {
            1.0
        } else {
            jain_index(&self.tenant_resource_time).expect("resource-time is nonnegative")
        };
        MetricsSnapshot {
            clock_ms: self.clock,
            completed: self.completed,
            unfinished: self.queue.len() + self.running,
            mean_delay_ms,
            utilization_time_avg,
            jfi_final,
        }
    }

    /// Advance to the next decision point, or report that the episode is over.
    pub fn next_decision(&mut self) -> Decision {
        loop {
            if self.stalled {
                return Decision::Done(self.episode_metrics());
            }
            if let Some(&task) = self.queue.front() {
                debug_assert!(self.check_invariants().is_ok(), "{:?}", self.check_invariants());
                return Decision::Pending {
                    clock: self.clock,
                    task,
                };
            }
            if self.events.pending_work() == 0 {
                return Decision::Done(self.episode_metrics());
            }
            self.advance_until_change();
        }
    }

    pub fn apply_action(&mut self, task: TaskId, action: Action) -> Result<()> {
        if self.stalled || self.queue.front() != Some(&task) {
            return Err(Error::NotDecisionTask(task));
        }
        match action {
            Action::Defer => {
                self.queue.pop_front();
                self.queue.push_back(task);
                self.deferred.insert(task);
                if self.deferred.len() >= self.queue.len() && !self.advance_until_change() {
                    self.stalled = true;
                }
                Ok(())
            }
            Action::Assign(node_id) => {
                let node = self.nodes.get(node_id).ok_or(Error::UnknownNode(node_id))?;
                let spec = &self.tasks[&task].spec;
                let demand = spec.demand;
                if !node.can_fit(task, &demand) {
                    return Err(Error::InfeasibleAction { task, node: node_id });
                }
                let duration = spec.duration;
                let delay = self.clock - spec.submit_time;
                let slot = self.tenant_index[&spec.tenant_id];

                self.queue.pop_front();
                let node = &mut self.nodes[node_id];
                node.running.insert(task, demand);
                node.refresh();
                self.tasks.get_mut(&task).expect("queued task exists").phase = TaskPhase::Running {
                    node: node_id,
                    start: self.clock,
                };
                self.running += 1;
                self.tenant_queued[slot] -= 1;
                self.tenant_running[slot] += 1;
                self.tenant_alloc[slot] += demand;
                self.tenant_dom_rate[slot] += demand.dominant_share(&self.total_capacity);
                self.start_log.push((self.clock, delay));
                self.events.push(SimEvent {
                    time: self.clock + duration,
                    kind: EventKind::Completion(task),
                });
                self.deferred.clear();
                Ok(())
            }
        }
    }

    // Move the clock to the next event time and process that whole batch,
    // repeating until some batch changes the state. Returns false if the
    // event queue ran dry first.
    fn advance_until_change(&mut self) -> bool {
        while let Some(t) = self.events.peek_time() {
            self.advance_clock(t);
            let mut changed = false;
            while self.events.peek_time() == Some(t) {
                let ev = self.events.pop().expect("peeked");
                changed |= self.process(ev);
            }
            if changed {
                self.deferred.clear();
                return true;
            }
        }
        false
    }

    fn advance_clock(&mut self, t: Millis) {
        debug_assert!(t >= self.clock, "clock would move backwards");
        let dt = (t - self.clock) as f64;
        if dt > 0.0 {
            self.util_integral += self.utilization() * dt;
            for (acc, rate) in self.tenant_resource_time.iter_mut().zip(&self.tenant_dom_rate) {
                *acc += rate * dt;
            }
        }
        self.clock = t;
    }

    fn process(&mut self, ev: SimEvent) -> bool {
        match ev.kind {
            EventKind::Arrival(spec) => {
                let slot = self.tenant_index[&spec.tenant_id];
                self.tenant_queued[slot] += 1;
                self.queue.push_back(spec.task_id);
                self.tasks.insert(
                    spec.task_id,
                    TaskRuntime {
                        spec,
                        phase: TaskPhase::Queued,
                    },
                );
                self.arrived += 1;
                true
            }
            EventKind::Completion(id) => {
                let rt = self.tasks.get_mut(&id).expect("completion for known task");
                let TaskPhase::Running { node, start } = rt.phase else {
                    unreachable!("completion for task {id} that is not running");
                };
                rt.phase = TaskPhase::Completed {
                    node,
                    start,
                    end: self.clock,
                };
                let demand = rt.spec.demand;
                let delay = start - rt.spec.submit_time;
                let slot = self.tenant_index[&rt.spec.tenant_id];

                let n = &mut self.nodes[node];
                n.running.remove(&id);
                n.refresh();
                self.running -= 1;
                self.completed += 1;
                self.completed_delay_sum += delay as f64;
                self.tenant_running[slot] -= 1;
                if self.tenant_running[slot] == 0 {
                    self.tenant_alloc[slot] = ResourceVector::ZERO;
                    self.tenant_dom_rate[slot] = 0.0;
                } else {
                    self.tenant_alloc[slot] = self.tenant_alloc[slot].saturating_sub(&demand);
                    self.tenant_dom_rate[slot] =
                        (self.tenant_dom_rate[slot] - demand.dominant_share(&self.total_capacity)).max(0.0);
                }
                true
            }
            EventKind::CapacityChange { node, scale } => {
                let n = &mut self.nodes[node];
                if n.capacity_scale == scale {
                    return false;
                }
                n.capacity_scale = scale;
                n.refresh();
                true
            }
        }
    }

    /// Check conservation and capacity invariants.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let on_nodes: usize = self.nodes.iter().map(|n| n.running.len()).sum();
        if on_nodes != self.running {
            return Err(format!("running count {} but {} on nodes", self.running, on_nodes));
        }
        if self.arrived != self.queue.len() + self.running + self.completed {
            return Err(format!(
                "conservation violated: arrived {} != queued {} + running {} + completed {}",
                self.arrived,
                self.queue.len(),
                self.running,
                self.completed
            ));
        }
        for n in &self.nodes {
            if n.allocated != n.allocation_with(None) {
                return Err(format!("node {} allocation drifted from running demands", n.node_id));
            }
            if !n.oversubscribed && !n.allocated.fits_within(&n.effective_capacity()) {
                return Err(format!(
                    "node {} allocated {:?} exceeds capacity {:?}",
                    n.node_id,
                    n.allocated,
                    n.effective_capacity()
                ));
            }
        }
        Ok(())
    }

    /// Deterministic plain-text dump of the full state, for fixtures and debugging.
    pub fn snapshot_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "clock {}", self.clock);
        for n in &self.nodes {
            let b = n.base_capacity;
            let a = n.allocated;
            let running: Vec<String> = n.running.keys().map(|k| k.to_string()).collect();
            let _ = writeln!(
                s,
                "node {} base {},{},{} scale {} allocated {},{},{} running [{}]",
                n.node_id,
                b.cpu,
                b.mem,
                b.disk,
                n.capacity_scale,
                a.cpu,
                a.mem,
                a.disk,
                running.join(",")
            );
        }
        let queue: Vec<String> = self.queue.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(s, "queue [{}]", queue.join(","));
        for t in self.tasks.values() {
            let phase = match t.phase {
                TaskPhase::Queued => "queued".to_string(),
                TaskPhase::Running { node, start } => format!("running node {node} start {start}"),
                TaskPhase::Completed { node, start, end } => {
                    format!("completed node {node} start {start} end {end}")
                }
            };
            let _ = writeln!(s, "task {} tenant {} {}", t.spec.task_id, t.spec.tenant_id, phase);
        }
        for ev in self.events.sorted() {
            let kind = match &ev.kind {
                EventKind::Arrival(spec) => format!("arrival {}", spec.task_id),
                EventKind::Completion(id) => format!("completion {id}"),
                EventKind::CapacityChange { node, scale } => format!("capacity node {node} scale {scale}"),
            };
            let _ = writeln!(s, "event {} {}", ev.time, kind);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: TaskId, tenant: TenantId, submit: Millis, duration: Millis, demand: [f64; 3]) -> TaskSpec {
        TaskSpec {
            task_id: id,
            tenant_id: tenant,
            priority: 0,
            submit_time: submit,
            duration,
            demand: ResourceVector::from_array(demand),
        }
    }

    fn one_node(cap: f64) -> ClusterConfig {
        ClusterConfig::uniform(1, ResourceVector::new(cap, cap, cap), vec![0])
    }

    fn pending(d: Decision) -> (Millis, TaskId) {
        match d {
            Decision::Pending { clock, task } => (clock, task),
            Decision::Done(m) => panic!("unexpected done: {m:?}"),
        }
    }

    #[test]
    fn empty_trace_is_done_immediately() {
        let cfg = ClusterConfig::uniform(2, ResourceVector::new(10.0, 10.0, 10.0), vec![]);
        let mut s = ClusterState::new(&cfg, &[]).unwrap();
        assert_eq!(s.clock(), 0);
        assert!(s.pending_events().is_empty());
        assert_eq!(s.utilization(), 0.0);
        match s.next_decision() {
            Decision::Done(m) => {
                assert_eq!(m.completed, 0);
                assert_eq!(m.mean_delay_ms, 0.0);
            }
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn init_enqueues_arrivals() {
        let s = ClusterState::new(&one_node(10.0), &[task(1, 0, 100, 10, [1.0, 0.0, 0.0])]).unwrap();
        let evs = s.pending_events();
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].time, 100);
        assert!(matches!(evs[0].kind, EventKind::Arrival(_)));
        assert!(s.queue().is_empty());
        assert_eq!(s.nodes()[0].allocated, ResourceVector::ZERO);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let t = task(7, 0, 0, 10, [1.0, 0.0, 0.0]);
        let err = ClusterState::new(&one_node(10.0), &[t.clone(), t]).err().unwrap();
        assert!(matches!(err, Error::DuplicateTask(7)));
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn non_positive_capacity_rejected() {
        let cfg = ClusterConfig::uniform(1, ResourceVector::ZERO, vec![]);
        assert!(matches!(ClusterState::new(&cfg, &[]), Err(Error::InvalidCluster(_))));
        let cfg = ClusterConfig::uniform(0, ResourceVector::new(1.0, 1.0, 1.0), vec![]);
        assert!(ClusterState::new(&cfg, &[]).is_err());
    }

    #[test]
    fn first_decision_at_arrival_time() {
        let mut s = ClusterState::new(&one_node(10.0), &[task(1, 0, 100, 10, [1.0, 0.0, 0.0])]).unwrap();
        assert_eq!(pending(s.next_decision()), (100, 1));
    }

    #[test]
    fn second_task_at_same_clock() {
        let trace = [task(1, 0, 100, 10, [1.0, 0.0, 0.0]), task(2, 0, 100, 10, [1.0, 0.0, 0.0])];
        let mut s = ClusterState::new(&one_node(10.0), &trace).unwrap();
        let (_, t) = pending(s.next_decision());
        s.apply_action(t, Action::Assign(0)).unwrap();
        assert_eq!(pending(s.next_decision()), (100, 2));
    }

    #[test]
    fn assign_sets_allocation_exactly() {
        let cfg = ClusterConfig::uniform(1, ResourceVector::new(5.0, 5.0, 5.0), vec![0]);
        let mut s = ClusterState::new(&cfg, &[task(1, 0, 0, 10, [2.0, 2.0, 0.0])]).unwrap();
        let (_, t) = pending(s.next_decision());
        s.apply_action(t, Action::Assign(0)).unwrap();
        assert_eq!(s.nodes()[0].allocated, ResourceVector::new(2.0, 2.0, 0.0));
    }

    #[test]
    fn infeasible_and_unknown_node_errors() {
        let cfg = ClusterConfig::uniform(1, ResourceVector::new(5.0, 5.0, 5.0), vec![0]);
        let mut s = ClusterState::new(&cfg, &[task(1, 0, 0, 10, [6.0, 0.0, 0.0])]).unwrap();
        let (_, t) = pending(s.next_decision());
        assert!(matches!(
            s.apply_action(t, Action::Assign(0)),
            Err(Error::InfeasibleAction { task: 1, node: 0 })
        ));
        assert!(matches!(s.apply_action(t, Action::Assign(3)), Err(Error::UnknownNode(3))));
        assert!(matches!(s.apply_action(99, Action::Defer), Err(Error::NotDecisionTask(99))));
    }

    #[test]
    fn defer_livelock_advances_to_next_event() {
        // task 1 runs 0..200, task 2 cannot fit until it completes
        let trace = [task(1, 0, 0, 200, [8.0, 0.0, 0.0]), task(2, 0, 0, 10, [5.0, 0.0, 0.0])];
        let mut s = ClusterState::new(&one_node(10.0), &trace).unwrap();
        let (_, t) = pending(s.next_decision());
        s.apply_action(t, Action::Assign(0)).unwrap();
        let (clock, t) = pending(s.next_decision());
        assert_eq!((clock, t), (0, 2));
        s.apply_action(t, Action::Defer).unwrap();
        let (clock, t) = pending(s.next_decision());
        assert_eq!((clock, t), (200, 2));
        // deferring again with nothing left to wait for ends the episode
        s.apply_action(t, Action::Defer).unwrap();
        assert_eq!(s.clock(), 200);
        match s.next_decision() {
            Decision::Done(m) => {
                assert_eq!(m.completed, 1);
                assert_eq!(m.unfinished, 1);
            }
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn defer_with_other_queued_tasks_does_not_advance() {
        let trace = [task(1, 0, 0, 10, [1.0, 0.0, 0.0]), task(2, 0, 0, 10, [1.0, 0.0, 0.0])];
        let mut s = ClusterState::new(&one_node(10.0), &trace).unwrap();
        let (_, t) = pending(s.next_decision());
        s.apply_action(t, Action::Defer).unwrap();
        assert_eq!(pending(s.next_decision()), (0, 2));
        s.apply_action(2, Action::Assign(0)).unwrap();
        assert_eq!(pending(s.next_decision()), (0, 1));
    }

    #[test]
    fn utilization_cases() {
        let cfg = ClusterConfig::uniform(2, ResourceVector::new(10.0, 10.0, 10.0), vec![0]);
        let mut s = ClusterState::new(&cfg, &[task(1, 0, 0, 10, [5.0, 5.0, 5.0])]).unwrap();
        assert_eq!(s.utilization(), 0.0);
        let (_, t) = pending(s.next_decision());
        s.apply_action(t, Action::Assign(0)).unwrap();
        // (0.5 * 3 + 0 * 3) / 6
        assert_eq!(s.utilization(), 0.25);

        let mut full = ClusterState::new(&one_node(4.0), &[task(1, 0, 0, 10, [4.0, 4.0, 4.0])]).unwrap();
        let (_, t) = pending(full.next_decision());
        full.apply_action(t, Action::Assign(0)).unwrap();
        assert_eq!(full.utilization(), 1.0);
    }

    #[test]
    fn zero_capacity_dimension_excluded() {
        let cfg = ClusterConfig::uniform(1, ResourceVector::new(10.0, 10.0, 0.0), vec![0]);
        let mut s = ClusterState::new(&cfg, &[task(1, 0, 0, 10, [5.0, 10.0, 0.0])]).unwrap();
        let (_, t) = pending(s.next_decision());
        s.apply_action(t, Action::Assign(0)).unwrap();
        assert_eq!(s.utilization(), 0.75);
    }

    fn run_fifo(s: &mut ClusterState) -> MetricsSnapshot {
        loop {
            match s.next_decision() {
                Decision::Done(m) => return m,
                Decision::Pending { task, .. } => {
                    let demand = s.task(task).unwrap().spec.demand;
                    let node = (0..s.node_count()).find(|&n| s.nodes()[n].can_fit(task, &demand));
                    let action = node.map(Action::Assign).unwrap_or(Action::Defer);
                    s.apply_action(task, action).unwrap();
                }
            }
        }
    }

    #[test]
    fn delay_metrics() {
        let mut s = ClusterState::new(&one_node(10.0), &[task(1, 0, 0, 10, [1.0, 0.0, 0.0])]).unwrap();
        assert_eq!(run_fifo(&mut s).mean_delay_ms, 0.0);

        // second task waits 50ms for the first to finish
        let trace = [task(1, 0, 0, 50, [10.0, 0.0, 0.0]), task(2, 0, 0, 10, [10.0, 0.0, 0.0])];
        let mut s = ClusterState::new(&one_node(10.0), &trace).unwrap();
        let m = run_fifo(&mut s);
        assert_eq!(m.completed, 2);
        assert_eq!(m.mean_delay_ms, 25.0);
        assert_eq!(s.task(2).unwrap().delay(), Some(50));

        // capacity is throttled until t=10, so the tasks start at 10 and 30
        let trace = [task(1, 0, 0, 20, [10.0, 0.0, 0.0]), task(2, 0, 0, 5, [10.0, 0.0, 0.0])];
        let mut s = ClusterState::new(&one_node(10.0), &trace).unwrap();
        s.schedule_events([SimEvent::capacity_change(0, 0, 0.1), SimEvent::capacity_change(10, 0, 1.0)])
            .unwrap();
        let m = run_fifo(&mut s);
        assert_eq!(s.task(1).unwrap().delay(), Some(10));
        assert_eq!(s.task(2).unwrap().delay(), Some(30));
        assert_eq!(m.mean_delay_ms, 20.0);
    }

    #[test]
    fn capacity_drop_does_not_evict() {
        let trace = [task(1, 0, 0, 100, [8.0, 0.0, 0.0]), task(2, 0, 20, 10, [1.0, 0.0, 0.0])];
        let mut s = ClusterState::new(&one_node(10.0), &trace).unwrap();
        s.schedule_events([SimEvent::capacity_change(10, 0, 0.5)]).unwrap();
        let (_, t) = pending(s.next_decision());
        s.apply_action(t, Action::Assign(0)).unwrap();
        let (clock, t) = pending(s.next_decision());
        assert_eq!(clock, 20);
        let n = &s.nodes()[0];
        assert!(n.is_oversubscribed());
        assert_eq!(n.running_tasks().collect::<Vec<_>>(), vec![1]);
        assert!(!n.can_fit(t, &ResourceVector::new(1.0, 0.0, 0.0)));
        assert!(s.check_invariants().is_ok());
        s.apply_action(t, Action::Defer).unwrap();
        // next state change is the completion at 100
        assert_eq!(pending(s.next_decision()), (100, 2));
        assert!(!s.nodes()[0].is_oversubscribed());
    }

    #[test]
    fn resource_time_accounting_matches_records() {
        let trace = [
            task(1, 0, 0, 100, [5.0, 0.0, 0.0]),
            task(2, 1, 10, 50, [2.0, 4.0, 0.0]),
            task(3, 1, 20, 70, [1.0, 1.0, 1.0]),
        ];
        let mut s = ClusterState::new(&one_node(10.0), &trace).unwrap();
        run_fifo(&mut s);
        let acc = s.tenant_resource_time().to_vec();
        let rec = s.tenant_resource_time_between(0, s.clock());
        for (a, r) in acc.iter().zip(&rec) {
            assert!((a - r).abs() < 1e-9, "{acc:?} vs {rec:?}");
        }
        assert!((acc[0] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn snapshot_text_is_stable() {
        let trace = [task(1, 0, 0, 10, [2.0, 2.0, 0.0]), task(2, 0, 5, 10, [1.0, 0.0, 0.0])];
        let mut s = ClusterState::new(&one_node(5.0), &trace).unwrap();
        let (_, t) = pending(s.next_decision());
        s.apply_action(t, Action::Assign(0)).unwrap();
        let expected = "\
clock 0
node 0 base 5,5,5 scale 1 allocated 2,2,0 running [1]
queue []
task 1 tenant 0 running node 0 start 0
event 5 arrival 2
event 10 completion 1
";
        assert_eq!(s.snapshot_text(), expected);
    }
}
