//! Heuristic schedulers behind the same decision interface as the learned policy.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::mdp::ActionMask;
use crate::seed::SimRng;
use crate::sim::{ClusterState, TaskId};
use crate::Error;

/// Anything that can choose an action at a decision point.
///
/// The returned index must be allowed by `mask` (`mask.len() - 1` defers).
pub trait SchedulerPolicy {
    fn name(&self) -> &str;

    fn decide(&mut self, state: &ClusterState, task: TaskId, mask: &ActionMask, rng: &mut SimRng) -> usize;

    /// Called at the start of every episode.
    fn reset(&mut self) {}
}

impl<P: SchedulerPolicy + ?Sized> SchedulerPolicy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn decide(&mut self, state: &ClusterState, task: TaskId, mask: &ActionMask, rng: &mut SimRng) -> usize {
        (**self).decide(state, task, mask, rng)
    }

    fn reset(&mut self) {
        (**self).reset()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Fifo,
    LeastLoaded,
    RoundRobin,
    Random,
    TenantFair,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Fifo,
        BaselineKind::LeastLoaded,
        BaselineKind::RoundRobin,
        BaselineKind::Random,
        BaselineKind::TenantFair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Fifo => "fifo",
            BaselineKind::LeastLoaded => "least_loaded",
            BaselineKind::RoundRobin => "round_robin",
            BaselineKind::Random => "random",
            BaselineKind::TenantFair => "tenant_fair",
        }
    }

    pub fn build(self) -> Box<dyn SchedulerPolicy + Send> {
        match self {
            BaselineKind::Fifo => Box::new(FifoFirstFit),
            BaselineKind::LeastLoaded => Box::new(LeastLoaded),
            BaselineKind::RoundRobin => Box::new(RoundRobin::default()),
            BaselineKind::Random => Box::new(RandomFit),
            BaselineKind::TenantFair => Box::new(TenantFair),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown baseline scheduler `{s}`")))
    }
}

pub fn fifo_first_fit(mask: &ActionMask) -> usize {
    mask.feasible_nodes().next().unwrap_or(mask.defer_index())
}

pub fn least_loaded(state: &ClusterState, mask: &ActionMask) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for i in mask.feasible_nodes() {
        let load = state.nodes()[i].load();
        if best.is_none_or(|(_, l)| load < l) {
            best = Some((i, load));
        }
    }
    best.map(|(i, _)| i).unwrap_or(mask.defer_index())
}

pub struct FifoFirstFit;

impl SchedulerPolicy for FifoFirstFit {
    fn name(&self) -> &str {
        "fifo"
    }

    fn decide(&mut self, _: &ClusterState, _: TaskId, mask: &ActionMask, _: &mut SimRng) -> usize {
        fifo_first_fit(mask)
    }
}

pub struct LeastLoaded;

impl SchedulerPolicy for LeastLoaded {
    fn name(&self) -> &str {
        "least_loaded"
    }

    fn decide(&mut self, state: &ClusterState, _: TaskId, mask: &ActionMask, _: &mut SimRng) -> usize {
        least_loaded(state, mask)
    }
}

#[derive(Default)]
pub struct RoundRobin {
    cursor: usize,
}

impl SchedulerPolicy for RoundRobin {
    fn name(&self) -> &str {
        "round_robin"
    }

    fn decide(&mut self, _: &ClusterState, _: TaskId, mask: &ActionMask, _: &mut SimRng) -> usize {
        let n = mask.defer_index();
        for k in 0..n {
            let i = (self.cursor + k) % n;
            if mask.allows(i) {
                self.cursor = (i + 1) % n;
                return i;
            }
        }
        n
    }

    fn reset(&mut self) {
        self.cursor = 0;
    }
}

pub struct RandomFit;

impl SchedulerPolicy for RandomFit {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&mut self, _: &ClusterState, _: TaskId, mask: &ActionMask, rng: &mut SimRng) -> usize {
        let feasible: Vec<usize> = mask.feasible_nodes().collect();
        if feasible.is_empty() {
            mask.defer_index()
        } else {
            feasible[rng.random_range(0..feasible.len())]
        }
    }
}

/// Place only tasks of the tenant with the smallest current dominant share
/// among tenants with queued work; everything else is deferred.
pub struct TenantFair;

impl SchedulerPolicy for TenantFair {
    fn name(&self) -> &str {
        "tenant_fair"
    }

    fn decide(&mut self, state: &ClusterState, task: TaskId, mask: &ActionMask, _: &mut SimRng) -> usize {
        let tenant = state.task(task).expect("decision task exists").spec.tenant_id;
        let min_share = state
            .tenants()
            .iter()
            .filter(|t| state.tenant_queued(**t) > 0)
            .map(|t| state.tenant_dominant_share(*t))
            .fold(f64::INFINITY, f64::min);
        if state.tenant_dominant_share(tenant) <= min_share {
            least_loaded(state, mask)
        } else {
            mask.defer_index()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::action_mask;
    use crate::seed::rng_from_seed;
    use crate::sim::{Action, ClusterConfig, Decision, ResourceVector, TaskSpec, TenantId};
    use proptest::prelude::*;

    fn mask(v: &[bool]) -> ActionMask {
        ActionMask(v.to_vec())
    }

    fn task(id: TaskId, tenant: TenantId, submit: u64, duration: u64, demand: [f64; 3]) -> TaskSpec {
        TaskSpec {
            task_id: id,
            tenant_id: tenant,
            priority: 0,
            submit_time: submit,
            duration,
            demand: ResourceVector::from_array(demand),
        }
    }

    fn head(s: &mut ClusterState) -> TaskId {
        match s.next_decision() {
            Decision::Pending { task, .. } => task,
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn first_fit_cases() {
        assert_eq!(fifo_first_fit(&mask(&[true, true, true])), 0);
        assert_eq!(fifo_first_fit(&mask(&[false, false, true])), 2);
        assert_eq!(fifo_first_fit(&mask(&[false, true, true])), 1);
    }

    // Two nodes of capacity 10; node 0 gets a task of size `a`, node 1 of size `b`.
    fn loaded_pair(a: f64, b: f64, probe: [f64; 3]) -> (ClusterState, TaskId) {
        let cfg = ClusterConfig::uniform(2, ResourceVector::new(10.0, 10.0, 10.0), vec![]);
        let trace = [
            task(1, 0, 0, 100, [a, a, a]),
            task(2, 0, 0, 100, [b, b, b]),
            task(3, 0, 0, 100, probe),
        ];
        let mut s = ClusterState::new(&cfg, &trace).unwrap();
        let t = head(&mut s);
        s.apply_action(t, Action::Assign(0)).unwrap();
        let t = head(&mut s);
        s.apply_action(t, Action::Assign(1)).unwrap();
        let t = head(&mut s);
        (s, t)
    }

    #[test]
    fn least_loaded_cases() {
        let (s, t) = loaded_pair(1.0, 5.0, [1.0, 1.0, 1.0]);
        assert_eq!(least_loaded(&s, &action_mask(&s, t)), 0);
        let (s, t) = loaded_pair(5.0, 1.0, [1.0, 1.0, 1.0]);
        assert_eq!(least_loaded(&s, &action_mask(&s, t)), 1);
        let (s, t) = loaded_pair(2.0, 2.0, [1.0, 1.0, 1.0]);
        assert_eq!(least_loaded(&s, &action_mask(&s, t)), 0);
        // node 1 less loaded (0.1) but the task does not fit there
        let (s, t) = loaded_pair(3.0, 1.0, [1.0, 1.0, 1.0]);
        assert_eq!(least_loaded(&s, &mask(&[true, false, true])), 0);
        assert_eq!(least_loaded(&s, &action_mask(&s, t)), 1);
        assert_eq!(least_loaded(&s, &mask(&[false, false, true])), 2);
    }

    #[test]
    fn round_robin_cycles() {
        let (s, t) = loaded_pair(0.0 + 1.0, 1.0, [1.0, 0.0, 0.0]);
        let mut rr = RoundRobin::default();
        let mut rng = rng_from_seed(0);
        let m = mask(&[true, true, true, true]);
        let seq: Vec<usize> = (0..4).map(|_| rr.decide(&s, t, &m, &mut rng)).collect();
        assert_eq!(seq, vec![0, 1, 2, 0]);
        // skips infeasible nodes and advances past the chosen one
        let m = mask(&[true, false, true, true]);
        assert_eq!(rr.decide(&s, t, &m, &mut rng), 2);
        assert_eq!(rr.decide(&s, t, &m, &mut rng), 0);
        assert_eq!(rr.decide(&s, t, &mask(&[false, false, false, true]), &mut rng), 3);
    }

    #[test]
    fn random_fit_single_option() {
        let (s, t) = loaded_pair(1.0, 1.0, [1.0, 0.0, 0.0]);
        let mut rng = rng_from_seed(3);
        let m = mask(&[false, true, true]);
        assert!((0..100).all(|_| RandomFit.decide(&s, t, &m, &mut rng) == 1));
        let m = mask(&[true, true, true]);
        let zeros = (0..1000).filter(|_| RandomFit.decide(&s, t, &m, &mut rng) == 0).count();
        assert!((400..600).contains(&zeros));
    }

    #[test]
    fn tenant_fair_defers_richer_tenant() {
        // tenant 0 (A) holds 0.1 of cpu, tenant 1 (B) holds 0.6; both have queued work
        let cfg = ClusterConfig::uniform(1, ResourceVector::new(10.0, 10.0, 10.0), vec![]);
        let trace = [
            task(1, 0, 0, 100, [1.0, 0.0, 0.0]),
            task(2, 1, 0, 100, [6.0, 0.0, 0.0]),
            task(3, 1, 0, 100, [1.0, 0.0, 0.0]),
            task(4, 0, 0, 100, [1.0, 0.0, 0.0]),
        ];
        let mut s = ClusterState::new(&cfg, &trace).unwrap();
        for _ in 0..2 {
            let t = head(&mut s);
            s.apply_action(t, Action::Assign(0)).unwrap();
        }
        let t = head(&mut s);
        assert_eq!(t, 3);
        assert!((s.tenant_dominant_share(0) - 0.1).abs() < 1e-12);
        assert!((s.tenant_dominant_share(1) - 0.6).abs() < 1e-12);
        let mut rng = rng_from_seed(0);
        assert_eq!(TenantFair.decide(&s, t, &action_mask(&s, t), &mut rng), 1);
        s.apply_action(t, Action::Defer).unwrap();
        let t = head(&mut s);
        assert_eq!(t, 4);
        assert_eq!(TenantFair.decide(&s, t, &action_mask(&s, t), &mut rng), 0);
    }

    #[test]
    fn names_roundtrip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
            assert_eq!(k.build().name(), k.name());
        }
        assert!("rl".parse::<BaselineKind>().is_err());
    }

    proptest! {
        // Drive whole episodes and check every decision against the mask.
        #[test]
        fn baselines_respect_mask(seed in any::<u64>(), kind in 0usize..5) {
            use rand::Rng;
            let mut rng = rng_from_seed(seed);
            let nodes = rng.random_range(1..4);
            let cfg = ClusterConfig::uniform(nodes, ResourceVector::new(8.0, 8.0, 8.0), vec![]);
            let trace: Vec<TaskSpec> = (1..30)
                .map(|i| task(i, rng.random_range(0..3), rng.random_range(0..500), rng.random_range(1..200), [
                    rng.random_range(0.1..9.0), rng.random_range(0.0..6.0), rng.random_range(0.0..3.0),
                ]))
                .collect();
            let mut s = ClusterState::new(&cfg, &trace).unwrap();
            let mut policy = BaselineKind::ALL[kind].build();
            while let Decision::Pending { task, .. } = s.next_decision() {
                let m = action_mask(&s, task);
                let a = policy.decide(&s, task, &m, &mut rng);
                prop_assert!(m.allows(a));
                s.apply_action(task, Action::from_index(a, nodes)).unwrap();
            }
        }
    }
}
