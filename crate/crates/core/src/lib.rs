//! Multi-tenant cluster scheduling with a learned placement policy.
//!
//! The crate is layered bottom-up:
//!
//! - [`sim`]: deterministic discrete-event simulation of a cluster of nodes
//!   shared by several tenants. Tasks arrive, wait in a queue, get placed on a
//!   node by a scheduler and complete after a fixed duration.
//! - [`workload`]: trace parsing/serialization and seeded synthetic workloads,
//!   including capacity-fluctuation schedules.
//! - [`mdp`]: the reinforcement-learning view of the simulator: observation
//!   features, action masks, reward terms and the weighted reward.
//! - [`net`]: a small tanh MLP with policy and value heads, hand-written
//!   backpropagation and an Adam optimizer.
//! - [`ppo`]: rollout collection, advantage estimation, the clipped surrogate
//!   objective, training and evaluation.
//! - [`baselines`]: heuristic schedulers behind the same decision interface.
//! - [`scenario`]: the reference desk environments used by tests and the CLI.

pub mod baselines;
pub mod error;
pub mod mdp;
pub mod net;
pub mod ppo;
pub mod scenario;
pub mod seed;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
