//! Proximal policy optimization over the scheduling environment.

mod env;
mod loss;
mod rollout;
mod train;

pub use env::{run_episode, Episode, EpisodeResult, PolicyScheduler, Scenario, SchedEnv, StepOutcome, WorkloadSource};
pub use loss::{
    clipped_surrogate, clipped_surrogate_grad, minibatch_loss, ppo_update, standardize, LossConfig, LossReport,
    UpdateConfig,
};
pub use rollout::{collect_rollout, compute_advantages, AdvantageEstimates, RolloutBuffer, Transition};
pub use train::{
    curve_csv, evaluate, evaluate_policy, train, train_with, CurvePoint, EvalSummary, PpoHyper, TrainOutput, CURVE_HEADER,
};
