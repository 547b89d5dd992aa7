use serde::{Deserialize, Serialize};

use crate::baselines::SchedulerPolicy;
use crate::mdp::{
    action_mask, compute_reward_terms, featurize, reward, ActionMask, FeatureParams, MdpConfig, MdpParams, Observation,
    RewardTerms,
};
use crate::net::{forward, masked_softmax, MlpParams};
use crate::seed::{derive_seed, SimRng};
use crate::sim::{Action, ClusterConfig, ClusterState, Decision, Millis, MetricsSnapshot, TaskId, TaskSpec};
use crate::workload::{generate_fluctuation, generate_workload, FluctuationConfig, WorkloadConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadSource {
    /// Replay the same trace every episode.
    Trace(Vec<TaskSpec>),
    /// Draw a fresh synthetic trace per episode.
    Synthetic(WorkloadConfig),
}

/// Everything needed to build simulation episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub cluster: ClusterConfig,
    pub workload: WorkloadSource,
    #[serde(default)]
    pub fluctuation: Option<FluctuationConfig>,
    #[serde(default)]
    pub mdp: MdpConfig,
}

pub struct Episode {
    pub state: ClusterState,
    pub params: MdpParams,
    pub trace: Vec<TaskSpec>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.mdp.validate()?;
        if let WorkloadSource::Synthetic(w) = &self.workload {
            w.validate()?;
        }
        if let Some(f) = &self.fluctuation {
            f.validate()?;
        }
        ClusterState::new(&self.cluster, &[])?;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.cluster.node_count()
    }

    pub fn feature_params(&self) -> FeatureParams {
        self.mdp.feature_params(self.node_count())
    }

    pub fn trace_for(&self, episode_seed: u64) -> Result<Vec<TaskSpec>> {
        match &self.workload {
            WorkloadSource::Trace(t) => Ok(t.clone()),
            WorkloadSource::Synthetic(cfg) => generate_workload(&cfg.with_seed(derive_seed(cfg.seed, episode_seed))),
        }
    }

    /// Build the simulation for one episode; equal seeds give equal episodes.
    pub fn build_episode(&self, episode_seed: u64) -> Result<Episode> {
        let trace = self.trace_for(episode_seed)?;
        let mut state = ClusterState::new(&self.cluster, &trace)?;
        if let Some(f) = &self.fluctuation {
            let horizon = match &self.workload {
                WorkloadSource::Synthetic(cfg) => cfg.horizon_ms(),
                WorkloadSource::Trace(t) => t.iter().map(|t| t.submit_time + t.duration).max().unwrap_or(0),
            };
            let cfg = FluctuationConfig {
                seed: derive_seed(f.seed, episode_seed),
                ..*f
            };
            let nodes: Vec<usize> = (0..self.node_count()).collect();
            state.schedule_events(generate_fluctuation(&cfg, &nodes, horizon)?)?;
        }
        let params = self.mdp.resolve(&self.cluster, &trace)?;
        Ok(Episode { state, params, trace })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: bool,
    /// Final metrics when `done`.
    pub metrics: Option<MetricsSnapshot>,
}

/// Episodic scheduling environment over a [`Scenario`].
///
/// Episode `k` of an environment seeded with `s` is built from
/// `derive_seed(s, k)`, so two environments with the same seed replay the same
/// sequence of episodes.
pub struct SchedEnv {
    scenario: Scenario,
    seed: u64,
    episodes_started: u64,
    features: FeatureParams,
    episode: Option<Episode>,
    current: Option<(Millis, TaskId)>,
    final_metrics: Option<MetricsSnapshot>,
}

impl SchedEnv {
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let features = scenario.feature_params();
        Ok(SchedEnv {
            scenario,
            seed,
            episodes_started: 0,
            features,
            episode: None,
            current: None,
            final_metrics: None,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn feature_params(&self) -> FeatureParams {
        self.features
    }

    pub fn obs_dim(&self) -> usize {
        crate::mdp::obs_dim(self.scenario.node_count())
    }

    pub fn action_dim(&self) -> usize {
        crate::mdp::action_dim(self.scenario.node_count())
    }

    pub fn episodes_started(&self) -> u64 {
        self.episodes_started
    }

    /// Start the next episode. Returns false if it has no decisions at all.
    pub fn reset(&mut self) -> Result<bool> {
        let episode = self
            .scenario
            .build_episode(derive_seed(self.seed, self.episodes_started))?;
        self.episodes_started += 1;
        self.episode = Some(episode);
        self.final_metrics = None;
        self.advance();
        Ok(self.current.is_some())
    }

    fn advance(&mut self) {
        let ep = self.episode.as_mut().expect("episode started");
        match ep.state.next_decision() {
            Decision::Pending { clock, task } => self.current = Some((clock, task)),
            Decision::Done(m) => {
                self.current = None;
                self.final_metrics = Some(m);
            }
        }
    }

    /// Whether a decision is pending.
    pub fn is_active(&self) -> bool {
        self.current.is_some()
    }

    pub fn state(&self) -> Option<&ClusterState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn mdp_params(&self) -> Option<&MdpParams> {
        self.episode.as_ref().map(|e| &e.params)
    }

    pub fn current_task(&self) -> Option<TaskId> {
        self.current.map(|(_, t)| t)
    }

    pub fn final_metrics(&self) -> Option<&MetricsSnapshot> {
        self.final_metrics.as_ref()
    }

    pub fn mask(&self) -> Result<ActionMask> {
        let (state, task) = self.pending()?;
        Ok(action_mask(state, task))
    }

    pub fn observe(&self) -> Result<(Observation, ActionMask)> {
        let (state, task) = self.pending()?;
        Ok((featurize(state, task, &self.features), action_mask(state, task)))
    }

    fn pending(&self) -> Result<(&ClusterState, TaskId)> {
        match (&self.episode, self.current) {
            (Some(ep), Some((_, task))) => Ok((&ep.state, task)),
            _ => Err(Error::InvalidConfig("no pending decision; reset the environment".into())),
        }
    }

    /// Apply flat action `action`, advance to the next decision and score the result.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let (_, task) = self.pending()?;
        let nodes = self.scenario.node_count();
        let ep = self.episode.as_mut().expect("pending implies episode");
        ep.state.apply_action(task, Action::from_index(action, nodes))?;
        self.advance();
        let ep = self.episode.as_ref().expect("episode");
        let terms = compute_reward_terms(&ep.state, ep.params.window_ms, ep.params.d_ref_ms);
        Ok(StepOutcome {
            reward: reward(&terms, &ep.params.weights),
            terms,
            done: self.current.is_none(),
            metrics: self.final_metrics.clone(),
        })
    }
}

/// Policy network used as a scheduler: argmax when `deterministic`, else sampled.
pub struct PolicyScheduler {
    pub params: MlpParams,
    pub features: FeatureParams,
    pub deterministic: bool,
}

impl PolicyScheduler {
    pub fn new(params: MlpParams, features: FeatureParams, deterministic: bool) -> Self {
        PolicyScheduler {
            params,
            features,
            deterministic,
        }
    }
}

impl SchedulerPolicy for PolicyScheduler {
    fn name(&self) -> &str {
        "rl"
    }

    fn decide(&mut self, state: &ClusterState, task: TaskId, mask: &ActionMask, rng: &mut SimRng) -> usize {
        let obs = featurize(state, task, &self.features);
        let out = forward(&self.params, obs.as_slice()).expect("network matches the cluster");
        let dist = masked_softmax(&out.logits, mask.as_slice()).expect("defer is always allowed");
        if self.deterministic {
            dist.argmax()
        } else {
            dist.sample(rng)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub metrics: MetricsSnapshot,
    pub total_reward: f64,
    pub steps: usize,
}

/// Run one full episode with `policy`, rejecting any masked choice.
pub fn run_episode<P: SchedulerPolicy + ?Sized>(env: &mut SchedEnv, policy: &mut P, rng: &mut SimRng) -> Result<EpisodeResult> {
    policy.reset();
    env.reset()?;
    let mut total_reward = 0.0;
    let mut steps = 0;
    while env.is_active() {
        let mask = env.mask()?;
        let (state, task) = env.pending()?;
        let action = policy.decide(state, task, &mask, rng);
        if !mask.allows(action) {
            return Err(Error::MaskedAction(action));
        }
        total_reward += env.step(action)?.reward;
        steps += 1;
    }
    Ok(EpisodeResult {
        metrics: env.final_metrics.clone().expect("inactive env has final metrics"),
        total_reward,
        steps,
    })
}
