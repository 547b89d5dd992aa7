use super::env::SchedEnv;
use crate::mdp::{ActionMask, Observation, RewardTerms};
use crate::net::{forward, masked_softmax, MlpParams};
use crate::seed::SimRng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub mask: ActionMask,
    pub action: usize,
    /// Log-probability of `action` under the policy that collected it.
    pub log_prob_old: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
    pub terms: RewardTerms,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    /// Value estimate of the state after the last transition (0 if it ended an episode).
    pub bootstrap_value: f64,
    /// Final metrics of each episode completed during collection.
    pub finished_episodes: usize,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.transitions.iter().map(|t| t.reward).sum::<f64>() / self.len() as f64
    }
}

// Episodes that end before any decision are skipped; give up after this many in a row.
const MAX_EMPTY_EPISODES: usize = 100;

fn ensure_active(env: &mut SchedEnv) -> Result<()> {
    let mut empty = 0;
    while !env.is_active() {
        if env.reset()? {
            return Ok(());
        }
        empty += 1;
        if empty >= MAX_EMPTY_EPISODES {
            return Err(Error::InvalidConfig(
                "scenario keeps producing episodes without any task".into(),
            ));
        }
    }
    Ok(())
}

/// Sample `horizon` transitions from the current policy, resetting on episode end.
pub fn collect_rollout(env: &mut SchedEnv, params: &MlpParams, horizon: usize, rng: &mut SimRng) -> Result<RolloutBuffer> {
    let mut buf = RolloutBuffer {
        transitions: Vec::with_capacity(horizon),
        ..Default::default()
    };
    for _ in 0..horizon {
        ensure_active(env)?;
        let (obs, mask) = env.observe()?;
        let out = forward(params, obs.as_slice())?;
        let dist = masked_softmax(&out.logits, mask.as_slice())?;
        let action = dist.sample(rng);
        let log_prob_old = dist.log_prob(action)?;
        let step = env.step(action)?;
        if step.done {
            buf.finished_episodes += 1;
        }
        buf.transitions.push(Transition {
            obs,
            mask,
            action,
            log_prob_old,
            reward: step.reward,
            value: out.value,
            done: step.done,
            terms: step.terms,
        });
    }
    buf.bootstrap_value = match buf.transitions.last() {
        Some(t) if !t.done => {
            let (obs, _) = env.observe()?;
            forward(params, obs.as_slice())?.value
        }
        _ => 0.0,
    };
    Ok(buf)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageEstimates {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// λ-weighted bootstrapped advantages (GAE) and value targets.
///
/// `δ_t = r_t + γ·V_{t+1}·(1−done_t) − V_t`, `A_t = δ_t + γλ·(1−done_t)·A_{t+1}`,
/// `R_t = A_t + V_t`, with `V_T` the buffer's bootstrap value.
pub fn compute_advantages(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> AdvantageEstimates {
    let n = buffer.len();
    let mut advantages = vec![0.0; n];
    let mut next_value = buffer.bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let tr = &buffer.transitions[t];
        let not_done = if tr.done { 0.0 } else { 1.0 };
        let delta = tr.reward + gamma * next_value * not_done - tr.value;
        let adv = delta + gamma * lambda * not_done * next_adv;
        advantages[t] = adv;
        next_adv = adv;
        next_value = tr.value;
    }
    let returns = advantages
        .iter()
        .zip(&buffer.transitions)
        .map(|(a, t)| a + t.value)
        .collect();
    AdvantageEstimates { advantages, returns }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(reward: f64, value: f64, done: bool) -> Transition {
        Transition {
            obs: Observation(vec![]),
            mask: ActionMask(vec![true]),
            action: 0,
            log_prob_old: 0.0,
            reward,
            value,
            done,
            terms: RewardTerms::default(),
        }
    }

    fn buffer(ts: Vec<Transition>, bootstrap: f64) -> RolloutBuffer {
        RolloutBuffer {
            transitions: ts,
            bootstrap_value: bootstrap,
            finished_episodes: 0,
        }
    }

    #[test]
    fn terminal_single_step() {
        let est = compute_advantages(&buffer(vec![tr(1.0, 0.0, true)], 5.0), 0.99, 0.95);
        assert_eq!(est.advantages, vec![1.0]);
        assert_eq!(est.returns, vec![1.0]);
    }

    #[test]
    fn zero_discount_is_one_step() {
        let b = buffer(vec![tr(1.0, 0.3, false), tr(-2.0, 0.5, false), tr(0.5, -1.0, true)], 9.0);
        let est = compute_advantages(&b, 0.0, 0.95);
        assert_eq!(est.advantages, vec![0.7, -2.5, 1.5]);
    }

    #[test]
    fn two_step_hand_case() {
        let b = buffer(vec![tr(1.0, 0.5, false), tr(1.0, 0.5, true)], 0.0);
        let est = compute_advantages(&b, 0.9, 1.0);
        assert!((est.advantages[0] - 1.4).abs() < 1e-12);
        assert!((est.advantages[1] - 0.5).abs() < 1e-12);
        assert!((est.returns[0] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_used_when_not_done() {
        let b = buffer(vec![tr(0.0, 0.0, false)], 2.0);
        let est = compute_advantages(&b, 0.5, 1.0);
        assert_eq!(est.advantages, vec![1.0]);
    }

    #[test]
    fn done_cuts_the_recursion() {
        let b = buffer(vec![tr(1.0, 0.0, true), tr(10.0, 0.0, false)], 0.0);
        let est = compute_advantages(&b, 1.0, 1.0);
        assert_eq!(est.advantages, vec![1.0, 10.0]);
    }
}
