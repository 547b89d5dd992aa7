use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::rollout::{AdvantageEstimates, RolloutBuffer, Transition};
use crate::net::{backward_into, forward, masked_softmax, Adam, MlpParams};
use crate::seed::SimRng;
use crate::{Error, Result};

/// Coefficients of the PPO objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            clip_epsilon: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
        }
    }
}

/// `min(ρ·A, clip(ρ, 1−ε, 1+ε)·A)` with `ρ = exp(log_new − log_old)`.
pub fn clipped_surrogate(log_prob_new: f64, log_prob_old: f64, advantage: f64, epsilon: f64) -> f64 {
    let ratio = (log_prob_new - log_prob_old).exp();
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to `log_prob_new`.
pub fn clipped_surrogate_grad(log_prob_new: f64, log_prob_old: f64, advantage: f64, epsilon: f64) -> f64 {
    let ratio = (log_prob_new - log_prob_old).exp();
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    if ratio * advantage <= clipped * advantage {
        ratio * advantage
    } else {
        0.0
    }
}

/// Averages over one minibatch. `total` is the quantity being minimized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Negated mean surrogate.
    pub policy_loss: f64,
    /// Mean squared error of the value head against the returns.
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
}

impl LossReport {
    fn is_finite(&self) -> bool {
        self.policy_loss.is_finite() && self.value_loss.is_finite() && self.entropy.is_finite() && self.total.is_finite()
    }
}

/// Standardize to zero mean and unit variance (population std, floored at 1e-8).
pub fn standardize(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    xs.iter().map(|x| (x - mean) / std).collect()
}

/// Loss and parameter gradient over a minibatch with already-standardized advantages.
pub fn minibatch_loss(
    params: &MlpParams,
    batch: &[&Transition],
    advantages: &[f64],
    returns: &[f64],
    cfg: &LossConfig,
) -> Result<(LossReport, MlpParams)> {
    if batch.len() != advantages.len() || batch.len() != returns.len() {
        return Err(Error::DimensionMismatch {
            context: "minibatch",
            expected: batch.len(),
            got: advantages.len().min(returns.len()),
        });
    }
    let mut grads = params.zeros_like();
    let mut report = LossReport::default();
    if batch.is_empty() {
        return Ok((report, grads));
    }
    let inv_n = 1.0 / batch.len() as f64;
    let mut d_logits = vec![0.0; params.action_dim()];
    for ((t, &adv), &ret) in batch.iter().zip(advantages).zip(returns) {
        let out = forward(params, t.obs.as_slice())?;
        let dist = masked_softmax(&out.logits, t.mask.as_slice())?;
        let log_new = dist.log_prob(t.action)?;
        let entropy = dist.entropy();
        let surrogate = clipped_surrogate(log_new, t.log_prob_old, adv, cfg.clip_epsilon);
        let value_err = out.value - ret;

        report.policy_loss -= surrogate * inv_n;
        report.value_loss += value_err * value_err * inv_n;
        report.entropy += entropy * inv_n;

        // d(-surrogate)/dz_j = -g·(1[j=a] − π_j); d(-c·H)/dz_j = c·π_j·(log π_j + H)
        let g = clipped_surrogate_grad(log_new, t.log_prob_old, adv, cfg.clip_epsilon);
        let probs = dist.probs();
        for (j, d) in d_logits.iter_mut().enumerate() {
            let p = probs[j];
            let indicator = if j == t.action { 1.0 } else { 0.0 };
            let mut v = -g * (indicator - p);
            if p > 0.0 {
                v += cfg.entropy_coef * p * (p.ln() + entropy);
            }
            *d = v * inv_n;
        }
        let d_value = cfg.value_coef * 2.0 * value_err * inv_n;
        backward_into(params, &out.trace, &d_logits, d_value, &mut grads)?;
    }
    report.total = report.policy_loss + cfg.value_coef * report.value_loss - cfg.entropy_coef * report.entropy;
    Ok((report, grads))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateConfig {
    pub loss: LossConfig,
    pub epochs: usize,
    pub minibatch_size: usize,
}

/// Run the PPO epochs over one rollout. Returns the mean of the minibatch reports.
///
/// `update_index` only labels the error if the loss goes non-finite.
pub fn ppo_update(
    params: &mut MlpParams,
    optimizer: &mut Adam,
    buffer: &RolloutBuffer,
    estimates: &AdvantageEstimates,
    cfg: &UpdateConfig,
    update_index: usize,
    rng: &mut SimRng,
) -> Result<LossReport> {
    let n = buffer.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut sum = LossReport::default();
    let mut count = 0usize;
    let mb = cfg.minibatch_size.max(1);
    for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(mb) {
            let batch: Vec<&Transition> = chunk.iter().map(|&i| &buffer.transitions[i]).collect();
            let adv: Vec<f64> = chunk.iter().map(|&i| estimates.advantages[i]).collect();
            let ret: Vec<f64> = chunk.iter().map(|&i| estimates.returns[i]).collect();
            let (report, grads) = minibatch_loss(params, &batch, &standardize(&adv), &ret, &cfg.loss)?;
            if !report.is_finite() {
                return Err(Error::NonFiniteLoss {
                    update: update_index,
                    diagnostics: format!(
                        "policy_loss={} value_loss={} entropy={} minibatch={}",
                        report.policy_loss,
                        report.value_loss,
                        report.entropy,
                        chunk.len()
                    ),
                });
            }
            optimizer.step(params, &grads)?;
            sum.policy_loss += report.policy_loss;
            sum.value_loss += report.value_loss;
            sum.entropy += report.entropy;
            sum.total += report.total;
            count += 1;
        }
    }
    if count > 0 {
        let k = 1.0 / count as f64;
        sum.policy_loss *= k;
        sum.value_loss *= k;
        sum.entropy *= k;
        sum.total *= k;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionMask, Observation, RewardTerms};
    use crate::net::init_params;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    #[test]
    fn surrogate_hand_cases() {
        let eps = 0.2;
        // ratio 1
        assert_eq!(clipped_surrogate(0.0, 0.0, 2.0, eps), 2.0);
        // ratio 1.5, positive advantage: clipped at 1.2
        let r = clipped_surrogate(1.5f64.ln(), 0.0, 1.0, eps);
        assert!((r - 1.2).abs() < 1e-12);
        // ratio 1.5, negative advantage: unclipped side is smaller
        let r = clipped_surrogate(1.5f64.ln(), 0.0, -1.0, eps);
        assert!((r + 1.5).abs() < 1e-12);
        // ratio 0.5, positive advantage: unclipped
        let r = clipped_surrogate(0.5f64.ln(), 0.0, 1.0, eps);
        assert!((r - 0.5).abs() < 1e-12);
        // ratio 0.5, negative advantage: clipped at 0.8
        let r = clipped_surrogate(0.5f64.ln(), 0.0, -1.0, eps);
        assert!((r + 0.8).abs() < 1e-12);
    }

    #[test]
    fn surrogate_grad_matches_finite_difference() {
        let mut rng = rng_from_seed(3);
        for _ in 0..200 {
            let old: f64 = rng.random_range(-2.0..0.0);
            let new = old + rng.random_range(-0.5..0.5);
            let adv = rng.random_range(-3.0..3.0);
            let h = 1e-6;
            let fd = (clipped_surrogate(new + h, old, adv, 0.2) - clipped_surrogate(new - h, old, adv, 0.2)) / (2.0 * h);
            let ratio = (new - old).exp();
            // skip the kinks
            if ((ratio - 0.8).abs() < 1e-4) || ((ratio - 1.2).abs() < 1e-4) {
                continue;
            }
            assert!((fd - clipped_surrogate_grad(new, old, adv, 0.2)).abs() < 1e-5);
        }
        assert_eq!(clipped_surrogate_grad(-0.7, -0.7, 1.3, 0.2), 1.3);
    }

    #[test]
    fn standardize_moments() {
        let z = standardize(&[1.0, 2.0, 3.0, 4.0]);
        let mean: f64 = z.iter().sum::<f64>() / 4.0;
        let var: f64 = z.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert_eq!(standardize(&[5.0, 5.0]), vec![0.0, 0.0]);
    }

    fn random_batch(rng: &mut SimRng, obs: usize, act: usize, n: usize) -> Vec<Transition> {
        (0..n)
            .map(|_| {
                let mut mask: Vec<bool> = (0..act).map(|_| rng.random_bool(0.6)).collect();
                mask[act - 1] = true;
                let allowed: Vec<usize> = (0..act).filter(|&i| mask[i]).collect();
                Transition {
                    obs: Observation((0..obs).map(|_| rng.random_range(-1.0..1.0)).collect()),
                    action: allowed[rng.random_range(0..allowed.len())],
                    mask: ActionMask(mask),
                    log_prob_old: rng.random_range(-2.0..-0.1),
                    reward: 0.0,
                    value: 0.0,
                    done: false,
                    terms: RewardTerms::default(),
                }
            })
            .collect()
    }

    #[test]
    fn loss_gradient_matches_finite_difference() {
        let mut rng = rng_from_seed(11);
        let cfg = LossConfig::default();
        for trial in 0..5 {
            let params = init_params(5, 4, &[6], trial).unwrap();
            let batch = random_batch(&mut rng, 5, 4, 8);
            let refs: Vec<&Transition> = batch.iter().collect();
            let adv: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ret: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, grads) = minibatch_loss(&params, &refs, &adv, &ret, &cfg).unwrap();

            let h = 1e-6;
            let flat_grads: Vec<f64> = grads.tensors().flatten().copied().collect();
            for (k, g) in flat_grads.iter().enumerate().step_by(3) {
                let mut plus = params.clone();
                let mut minus = params.clone();
                *plus.tensors_mut().flat_map(|t| t.iter_mut()).nth(k).unwrap() += h;
                *minus.tensors_mut().flat_map(|t| t.iter_mut()).nth(k).unwrap() -= h;
                let lp = minibatch_loss(&plus, &refs, &adv, &ret, &cfg).unwrap().0.total;
                let lm = minibatch_loss(&minus, &refs, &adv, &ret, &cfg).unwrap().0.total;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - g).abs() < 1e-5 * (1.0 + g.abs()), "param {k}: fd {fd} vs analytic {g}");
            }
        }
    }

    #[test]
    fn update_is_deterministic_and_rejects_nan() {
        let mut rng = rng_from_seed(5);
        let batch = random_batch(&mut rng, 3, 3, 16);
        let buffer = RolloutBuffer {
            transitions: batch,
            bootstrap_value: 0.0,
            finished_episodes: 0,
        };
        let est = AdvantageEstimates {
            advantages: (0..16).map(|i| i as f64 / 8.0 - 1.0).collect(),
            returns: vec![0.5; 16],
        };
        let cfg = UpdateConfig {
            loss: LossConfig::default(),
            epochs: 2,
            minibatch_size: 4,
        };
        let run = |est: &AdvantageEstimates| {
            let mut p = init_params(3, 3, &[4], 1).unwrap();
            let mut opt = Adam::new(&p, Default::default());
            let r = ppo_update(&mut p, &mut opt, &buffer, est, &cfg, 7, &mut rng_from_seed(9));
            r.map(|r| (r, p))
        };
        let (ra, pa) = run(&est).unwrap();
        let (rb, pb) = run(&est).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(pa, pb);

        let mut bad = est.clone();
        bad.returns[3] = f64::NAN;
        assert!(matches!(run(&bad), Err(Error::NonFiniteLoss { update: 7, .. })));
    }
}
