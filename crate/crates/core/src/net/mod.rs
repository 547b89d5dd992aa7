//! Feed-forward actor-critic network with hand-written backpropagation.
//!
//! A tanh trunk feeds two linear heads: policy logits (one per action) and a
//! scalar state value. Parameters, gradients and optimizer moments all share
//! the [`MlpParams`] layout so they can be walked in lockstep.

mod checkpoint;
mod dist;
mod optim;

use rand::Rng;

use crate::seed::rng_from_seed;
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use dist::{masked_softmax, MaskedDistribution};
pub use optim::{Adam, AdamConfig};

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
pub const POLICY_HEAD_INIT_SCALE: f64 = 0.01;

/// Fully connected layer, `weights` row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn glorot<R: Rng>(inputs: usize, outputs: usize, scale: f64, rng: &mut R) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..=bound) * scale)
            .collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            out.push(b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }

    // Accumulates dW, db and returns dx for upstream gradient `dy`.
    fn backprop(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: &mut Vec<f64>) {
        dx.clear();
        dx.resize(self.inputs, 0.0);
        for o in 0..self.outputs {
            let g = dy[o];
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = o * self.inputs;
            for i in 0..self.inputs {
                grad.weights[row + i] += g * x[i];
                dx[i] += self.weights[row + i] * g;
            }
        }
    }
}

/// Parameters of the actor-critic network (also used for gradients and moments).
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub trunk: Vec<Dense>,
    pub policy: Dense,
    pub value: Dense,
    pub seed: u64,
}

impl MlpParams {
    pub fn obs_dim(&self) -> usize {
        self.trunk.first().unwrap_or(&self.policy).inputs
    }

    pub fn action_dim(&self) -> usize {
        self.policy.outputs
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.trunk.iter().map(|l| l.outputs).collect()
    }

    pub fn zeros_like(&self) -> MlpParams {
        MlpParams {
            trunk: self.trunk.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
            policy: Dense::zeros(self.policy.inputs, self.policy.outputs),
            value: Dense::zeros(self.value.inputs, self.value.outputs),
            seed: self.seed,
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.iter().chain([&self.policy, &self.value])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk.iter_mut().chain([&mut self.policy, &mut self.value])
    }

    /// Every parameter tensor in a fixed order (weights then bias, per layer).
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers_mut().flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    pub fn param_count(&self) -> usize {
        self.tensors().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.trunk.len() == other.trunk.len()
            && self
                .layers()
                .zip(other.layers())
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// Rebuild from dimensions, checking that layer sizes chain.
    pub fn from_layers(trunk: Vec<Dense>, policy: Dense, value: Dense, seed: u64) -> Result<MlpParams> {
        let mut width = trunk.first().map(|l| l.inputs).unwrap_or(policy.inputs);
        for l in &trunk {
            if l.inputs != width {
                return Err(Error::DimensionMismatch {
                    context: "trunk layer input",
                    expected: width,
                    got: l.inputs,
                });
            }
            width = l.outputs;
        }
        for (head, outputs) in [(&policy, policy.outputs), (&value, 1)] {
            if head.inputs != width {
                return Err(Error::DimensionMismatch {
                    context: "head input",
                    expected: width,
                    got: head.inputs,
                });
            }
            if head.outputs != outputs {
                return Err(Error::DimensionMismatch {
                    context: "head output",
                    expected: outputs,
                    got: head.outputs,
                });
            }
        }
        for l in trunk.iter().chain([&policy, &value]) {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::DimensionMismatch {
                    context: "layer storage",
                    expected: l.inputs * l.outputs,
                    got: l.weights.len(),
                });
            }
        }
        Ok(MlpParams {
            trunk,
            policy,
            value,
            seed,
        })
    }
}

pub fn init_params(obs_dim: usize, action_dim: usize, hidden: &[usize], seed: u64) -> Result<MlpParams> {
    if obs_dim == 0 || action_dim == 0 || hidden.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "network dims must be >= 1 (obs {obs_dim}, actions {action_dim}, hidden {hidden:?})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut trunk = Vec::with_capacity(hidden.len());
    let mut width = obs_dim;
    for &h in hidden {
        trunk.push(Dense::glorot(width, h, 1.0, &mut rng));
        width = h;
    }
    let policy = Dense::glorot(width, action_dim, POLICY_HEAD_INIT_SCALE, &mut rng);
    let value = Dense::glorot(width, 1, 1.0, &mut rng);
    Ok(MlpParams {
        trunk,
        policy,
        value,
        seed,
    })
}

/// Cached activations from one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Trunk pre-activations, per layer.
    pub pre_activations: Vec<Vec<f64>>,
    /// Trunk tanh outputs, per layer.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    fn features(&self) -> &[f64] {
        self.activations.last().unwrap_or(&self.input)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    pub value: f64,
    pub trace: ForwardTrace,
}

pub fn forward(params: &MlpParams, obs: &[f64]) -> Result<ForwardOutput> {
    if obs.len() != params.obs_dim() {
        return Err(Error::DimensionMismatch {
            context: "observation",
            expected: params.obs_dim(),
            got: obs.len(),
        });
    }
    let mut pre_activations = Vec::with_capacity(params.trunk.len());
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(params.trunk.len());
    for layer in &params.trunk {
        let x = activations.last().map(Vec::as_slice).unwrap_or(obs);
        let mut z = Vec::with_capacity(layer.outputs);
        layer.apply(x, &mut z);
        activations.push(z.iter().map(|v| v.tanh()).collect());
        pre_activations.push(z);
    }
    let trace = ForwardTrace {
        input: obs.to_vec(),
        pre_activations,
        activations,
    };
    let mut logits = Vec::with_capacity(params.action_dim());
    params.policy.apply(trace.features(), &mut logits);
    let mut v = Vec::with_capacity(1);
    params.value.apply(trace.features(), &mut v);
    Ok(ForwardOutput {
        logits,
        value: v[0],
        trace,
    })
}

/// Accumulate into `grads` the parameter gradients for output cotangents
/// `d_logits` and `d_value`.
pub fn backward_into(
    params: &MlpParams,
    trace: &ForwardTrace,
    d_logits: &[f64],
    d_value: f64,
    grads: &mut MlpParams,
) -> Result<()> {
    if d_logits.len() != params.action_dim() {
        return Err(Error::DimensionMismatch {
            context: "logit gradient",
            expected: params.action_dim(),
            got: d_logits.len(),
        });
    }
    if trace.activations.len() != params.trunk.len() || trace.input.len() != params.obs_dim() {
        return Err(Error::DimensionMismatch {
            context: "forward trace",
            expected: params.trunk.len(),
            got: trace.activations.len(),
        });
    }
    if !grads.same_shape(params) {
        return Err(Error::DimensionMismatch {
            context: "gradient buffer",
            expected: params.param_count(),
            got: grads.param_count(),
        });
    }

    let features = trace.features();
    let mut dh = Vec::new();
    params.policy.backprop(features, d_logits, &mut grads.policy, &mut dh);
    let mut dh_value = Vec::new();
    params.value.backprop(features, &[d_value], &mut grads.value, &mut dh_value);
    for (a, b) in dh.iter_mut().zip(&dh_value) {
        *a += b;
    }

    let mut dx = Vec::new();
    for (k, layer) in params.trunk.iter().enumerate().rev() {
        let act = &trace.activations[k];
        let dz: Vec<f64> = dh.iter().zip(act).map(|(g, a)| g * (1.0 - a * a)).collect();
        let x = if k == 0 { &trace.input } else { &trace.activations[k - 1] };
        layer.backprop(x, &dz, &mut grads.trunk[k], &mut dx);
        std::mem::swap(&mut dh, &mut dx);
    }
    Ok(())
}

pub fn backward(params: &MlpParams, trace: &ForwardTrace, d_logits: &[f64], d_value: f64) -> Result<MlpParams> {
    let mut grads = params.zeros_like();
    backward_into(params, trace, d_logits, d_value, &mut grads)?;
    Ok(grads)
}
