use serde::{Deserialize, Serialize};

use super::env::{run_episode, EpisodeResult, PolicyScheduler, Scenario, SchedEnv};
use super::loss::{ppo_update, LossConfig, UpdateConfig};
use super::rollout::{collect_rollout, compute_advantages, AdvantageEstimates, RolloutBuffer};
use crate::baselines::SchedulerPolicy;
use crate::net::{init_params, Adam, AdamConfig, MlpParams, DEFAULT_HIDDEN};
use crate::seed::{derive_seed, rng_from_seed, SimRng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoHyper {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Transitions collected per environment instance and update.
    pub horizon: usize,
    /// Independent environment instances sampled each update.
    pub num_envs: usize,
    pub updates: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for PpoHyper {
    fn default() -> Self {
        PpoHyper {
            gamma: 0.99,
            lambda: 0.95,
            clip_epsilon: 0.2,
            epochs: 4,
            minibatch_size: 64,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            horizon: 512,
            num_envs: 1,
            updates: 100,
            hidden: DEFAULT_HIDDEN.to_vec(),
            seed: 0,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("lambda", self.lambda)?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("clip_epsilon", self.clip_epsilon)?;
        positive("learning_rate", self.learning_rate)?;
        positive("max_grad_norm", self.max_grad_norm)?;
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return Err(Error::InvalidConfig("loss coefficients must be >= 0".into()));
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.horizon == 0 || self.num_envs == 0 {
            return Err(Error::InvalidConfig(
                "epochs, minibatch_size, horizon and num_envs must be > 0".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer widths must be > 0".into()));
        }
        Ok(())
    }

    fn update_config(&self) -> UpdateConfig {
        UpdateConfig {
            loss: LossConfig {
                clip_epsilon: self.clip_epsilon,
                value_coef: self.value_coef,
                entropy_coef: self.entropy_coef,
            },
            epochs: self.epochs,
            minibatch_size: self.minibatch_size,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            max_grad_norm: self.max_grad_norm,
            ..AdamConfig::default()
        }
    }
}

/// One row of the training curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: usize,
    /// Mean per-step reward over the update's rollout.
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

pub const CURVE_HEADER: &str = "update,mean_reward,policy_loss,value_loss,entropy";

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for p in curve {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            p.update, p.mean_reward, p.policy_loss, p.value_loss, p.entropy
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutput {
    pub params: MlpParams,
    pub curve: Vec<CurvePoint>,
    pub episodes: u64,
}

/// Train a fresh policy. Fully determined by `scenario` and `hyper` (including its seed).
pub fn train(scenario: &Scenario, hyper: &PpoHyper) -> Result<TrainOutput> {
    train_with(scenario, hyper, |_| {})
}

/// [`train`] with a callback after each update.
pub fn train_with<F: FnMut(&CurvePoint)>(scenario: &Scenario, hyper: &PpoHyper, mut on_update: F) -> Result<TrainOutput> {
    hyper.validate()?;
    let mut workers = (0..hyper.num_envs)
        .map(|k| {
            let env = SchedEnv::new(scenario.clone(), derive_seed(hyper.seed, 100 + k as u64))?;
            Ok((env, rng_from_seed(derive_seed(hyper.seed, 200 + k as u64))))
        })
        .collect::<Result<Vec<_>>>()?;
    let (obs_dim, action_dim) = (workers[0].0.obs_dim(), workers[0].0.action_dim());
    let mut params = init_params(obs_dim, action_dim, &hyper.hidden, derive_seed(hyper.seed, 0))?;
    let mut optimizer = Adam::new(&params, hyper.adam());
    let mut rng = rng_from_seed(derive_seed(hyper.seed, 2));
    let update_cfg = hyper.update_config();

    let mut curve = Vec::with_capacity(hyper.updates);
    for update in 0..hyper.updates {
        let (buffer, estimates) = collect_all(&mut workers, &params, hyper)?;
        let report = ppo_update(&mut params, &mut optimizer, &buffer, &estimates, &update_cfg, update, &mut rng)?;
        let point = CurvePoint {
            update,
            mean_reward: buffer.mean_reward(),
            policy_loss: report.policy_loss,
            value_loss: report.value_loss,
            entropy: report.entropy,
        };
        log::debug!(
            "update {update}: reward {:.4} value_loss {:.4} entropy {:.4}",
            point.mean_reward,
            point.value_loss,
            point.entropy
        );
        on_update(&point);
        curve.push(point);
    }
    let episodes = workers.iter().map(|(env, _)| env.episodes_started()).sum();
    Ok(TrainOutput {
        params,
        curve,
        episodes,
    })
}

// Environments run on their own threads; results are concatenated in worker
// order, so the outcome does not depend on scheduling.
fn collect_all(
    workers: &mut [(SchedEnv, SimRng)],
    params: &MlpParams,
    hyper: &PpoHyper,
) -> Result<(RolloutBuffer, AdvantageEstimates)> {
    let parts: Vec<Result<(RolloutBuffer, AdvantageEstimates)>> = if workers.len() == 1 {
        let (env, rng) = &mut workers[0];
        vec![collect_one(env, rng, params, hyper)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = workers
                .iter_mut()
                .map(|(env, rng)| s.spawn(move || collect_one(env, rng, params, hyper)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("rollout worker panicked"))
                .collect()
        })
    };
    let mut buffer = RolloutBuffer::default();
    let mut estimates = AdvantageEstimates {
        advantages: Vec::new(),
        returns: Vec::new(),
    };
    for part in parts {
        let (b, e) = part?;
        buffer.transitions.extend(b.transitions);
        buffer.finished_episodes += b.finished_episodes;
        estimates.advantages.extend(e.advantages);
        estimates.returns.extend(e.returns);
    }
    Ok((buffer, estimates))
}

fn collect_one(
    env: &mut SchedEnv,
    rng: &mut SimRng,
    params: &MlpParams,
    hyper: &PpoHyper,
) -> Result<(RolloutBuffer, AdvantageEstimates)> {
    let buffer = collect_rollout(env, params, hyper.horizon, rng)?;
    let estimates = compute_advantages(&buffer, hyper.gamma, hyper.lambda);
    Ok((buffer, estimates))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: Vec<EpisodeResult>,
    pub mean_total_reward: f64,
    pub mean_delay_ms: f64,
    pub mean_utilization: f64,
    pub mean_jfi: f64,
    pub total_unfinished: usize,
}

impl EvalSummary {
    pub fn from_episodes(episodes: Vec<EpisodeResult>) -> Self {
        let n = episodes.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeResult) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        EvalSummary {
            mean_total_reward: mean(&|e| e.total_reward),
            mean_delay_ms: mean(&|e| e.metrics.mean_delay_ms),
            mean_utilization: mean(&|e| e.metrics.utilization_time_avg),
            mean_jfi: mean(&|e| e.metrics.jfi_final),
            total_unfinished: episodes.iter().map(|e| e.metrics.unfinished).sum(),
            episodes,
        }
    }
}

/// Run `episodes` consecutive episodes of `env` with any scheduler.
pub fn evaluate_policy<P: SchedulerPolicy + ?Sized>(
    policy: &mut P,
    env: &mut SchedEnv,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    let mut rng = rng_from_seed(seed);
    let results = (0..episodes)
        .map(|_| run_episode(env, policy, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_episodes(results))
}

/// Evaluate a trained network; `deterministic` picks the most probable action.
pub fn evaluate(params: &MlpParams, env: &mut SchedEnv, episodes: usize, deterministic: bool, seed: u64) -> Result<EvalSummary> {
    if params.obs_dim() != env.obs_dim() || params.action_dim() != env.action_dim() {
        return Err(Error::DimensionMismatch {
            context: "policy vs environment",
            expected: env.obs_dim(),
            got: params.obs_dim(),
        });
    }
    let mut policy = PolicyScheduler::new(params.clone(), env.feature_params(), deterministic);
    evaluate_policy(&mut policy, env, episodes, seed)
}
