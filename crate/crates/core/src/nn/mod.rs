//! Actor-critic multilayer perceptron with hand-written backpropagation.
//!
//! Layout: a LeakyReLU trunk (512/256/128 by default) feeding a linear
//! action-mean head and a linear value head. The log standard deviation of
//! the diagonal Gaussian policy is a free parameter vector, independent of
//! the state. Weights are stored `out x in`, so a layer computes
//! `x W^T + b` on a batch of row vectors.

mod checkpoint;
mod optim;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointError, RngState, Tensor};
pub use optim::{clip_grad_norm, Adam, RmsProp};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

pub fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub fn leaky_relu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_TWO_PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LN_TWO_PI).sum()
}

/// Orthogonal matrix scaled by `gain`: orthonormal rows when
/// `rows <= cols`, orthonormal columns otherwise. Built by Gram-Schmidt
/// (two passes) on a standard normal draw, which is the Q factor of its QR
/// decomposition with a positive R diagonal.
pub fn orthogonal_init<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let (n, k) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut q = Array2::<f64>::zeros((k, n));
    for v in q.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for j in 0..k {
        for _ in 0..2 {
            for p in 0..j {
                let proj = q.row(j).dot(&q.row(p));
                let basis = q.row(p).to_owned();
                q.row_mut(j).scaled_add(-proj, &basis);
            }
        }
        let len = q.row(j).dot(&q.row(j)).sqrt();
        q.row_mut(j).mapv_inplace(|x| x / len);
    }
    // `q` holds k orthonormal vectors of length n as rows.
    let q = if rows >= cols {
        q.reversed_axes().as_standard_layout().into_owned()
    } else {
        q
    };
    q * gain
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub action_dim: usize,
    /// Actor and critic share the trunk; otherwise each gets its own copy.
    pub shared_trunk: bool,
}

impl NetworkShape {
    pub fn standard(input: usize, action_dim: usize) -> Self {
        Self {
            input,
            hidden: vec![512, 256, 128],
            action_dim,
            shared_trunk: true,
        }
    }

    fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }

    fn layer_dims(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(self.input)
            .chain(self.hidden.iter().copied())
            .zip(self.hidden.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    fn orthogonal<R: Rng + ?Sized>(input: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        Self {
            weight: orthogonal_init(output, input, gain, rng),
            bias: Array1::zeros(output),
        }
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("non-finite value in {0}")]
    NonFiniteActivation(&'static str),
    #[error("input has {found} features, network expects {expected}")]
    InputWidth { expected: usize, found: usize },
}

/// Every trainable tensor of the actor-critic.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub shape: NetworkShape,
    pub actor_trunk: Vec<Linear>,
    /// Empty when the trunk is shared.
    pub critic_trunk: Vec<Linear>,
    pub mean_head: Linear,
    pub value_head: Linear,
    pub log_std: Array1<f64>,
}

/// Gradients have exactly the parameter layout.
pub type GradientSet = MlpParams;

/// Trunk layers use sqrt(2), the action head 0.01 and the value head 1.
pub const TRUNK_GAIN: f64 = std::f64::consts::SQRT_2;
pub const ACTION_GAIN: f64 = 0.01;
pub const VALUE_GAIN: f64 = 1.0;

impl MlpParams {
    pub fn new<R: Rng + ?Sized>(shape: NetworkShape, rng: &mut R) -> Self {
        let trunk = |rng: &mut R| -> Vec<Linear> {
            shape
                .layer_dims()
                .map(|(i, o)| Linear::orthogonal(i, o, TRUNK_GAIN, rng))
                .collect()
        };
        let actor_trunk = trunk(rng);
        let critic_trunk = if shape.shared_trunk { Vec::new() } else { trunk(rng) };
        let f = shape.feature_dim();
        Self {
            mean_head: Linear::orthogonal(f, shape.action_dim, ACTION_GAIN, rng),
            value_head: Linear::orthogonal(f, 1, VALUE_GAIN, rng),
            log_std: Array1::zeros(shape.action_dim),
            actor_trunk,
            critic_trunk,
            shape,
        }
    }

    pub fn zeros(shape: NetworkShape) -> Self {
        let trunk = || -> Vec<Linear> { shape.layer_dims().map(|(i, o)| Linear::zeros(i, o)).collect() };
        let f = shape.feature_dim();
        Self {
            actor_trunk: trunk(),
            critic_trunk: if shape.shared_trunk { Vec::new() } else { trunk() },
            mean_head: Linear::zeros(f, shape.action_dim),
            value_head: Linear::zeros(f, 1),
            log_std: Array1::zeros(shape.action_dim),
            shape,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape.clone())
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64], Vec<usize>)> {
        let mut out = Vec::new();
        for (k, l) in self.actor_trunk.iter().enumerate() {
            push_linear(format!("actor_trunk.{k}"), l, &mut out);
        }
        for (k, l) in self.critic_trunk.iter().enumerate() {
            push_linear(format!("critic_trunk.{k}"), l, &mut out);
        }
        push_linear("mean_head".into(), &self.mean_head, &mut out);
        push_linear("value_head".into(), &self.value_head, &mut out);
        out.push((
            "log_std".into(),
            self.log_std.as_slice().expect("standard layout"),
            vec![self.log_std.len()],
        ));
        out
    }

    /// Mutable views in the same order as [`MlpParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        let layers = self
            .actor_trunk
            .iter_mut()
            .chain(self.critic_trunk.iter_mut())
            .chain(std::iter::once(&mut self.mean_head))
            .chain(std::iter::once(&mut self.value_head));
        for l in layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.log_std.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t, _)| t.len()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t, _)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_scaled(&mut self, factor: f64, other: &MlpParams) {
        for (dst, (_, src, _)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += factor * s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t, _)| t.iter().all(|x| x.is_finite()))
    }

    /// Log-std as seen by the policy, clamped to its safe range.
    pub fn effective_log_std(&self) -> Array1<f64> {
        self.log_std.mapv(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX))
    }

    pub fn forward(&self, obs: ArrayView2<f64>) -> Result<(PolicyOutput, ForwardCache), NnError> {
        if obs.ncols() != self.shape.input {
            return Err(NnError::InputWidth {
                expected: self.shape.input,
                found: obs.ncols(),
            });
        }
        if obs.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFiniteActivation("input"));
        }
        let actor = run_trunk(&self.actor_trunk, obs);
        let critic = if self.shape.shared_trunk {
            None
        } else {
            Some(run_trunk(&self.critic_trunk, obs))
        };
        let critic_features = critic.as_ref().map_or(actor.features.view(), |c| c.features.view());
        let mean = self.mean_head.apply(actor.features.view());
        let value = self.value_head.apply(critic_features).index_axis_move(Axis(1), 0);
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFiniteActivation("action mean"));
        }
        if value.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFiniteActivation("value"));
        }
        Ok((
            PolicyOutput {
                mean,
                log_std: self.effective_log_std(),
                value,
            },
            ForwardCache { actor, critic },
        ))
    }

    /// Reverse-mode pass: gradients of a scalar loss given its gradients
    /// with respect to the network outputs.
    pub fn backward(&self, cache: &ForwardCache, grads: &OutputGrads) -> GradientSet {
        let mut out = self.zeros_like();

        let actor_features = &cache.actor.features;
        out.mean_head.weight = grads.mean.t().dot(actor_features);
        out.mean_head.bias = grads.mean.sum_axis(Axis(0));
        let mut d_actor = grads.mean.dot(&self.mean_head.weight);

        let d_value = grads.value.view().insert_axis(Axis(1));
        let critic_features = cache.critic.as_ref().map_or(actor_features, |c| &c.features);
        out.value_head.weight = d_value.t().dot(critic_features);
        out.value_head.bias = d_value.sum_axis(Axis(0));
        let d_critic = d_value.dot(&self.value_head.weight);

        match &cache.critic {
            None => {
                d_actor += &d_critic;
                trunk_backward(&self.actor_trunk, &cache.actor, d_actor, &mut out.actor_trunk);
            }
            Some(critic) => {
                trunk_backward(&self.actor_trunk, &cache.actor, d_actor, &mut out.actor_trunk);
                trunk_backward(&self.critic_trunk, critic, d_critic, &mut out.critic_trunk);
            }
        }

        out.log_std = Array1::from_shape_fn(self.log_std.len(), |k| {
            let raw = self.log_std[k];
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                grads.log_std[k]
            } else {
                0.0
            }
        });
        out
    }

    /// Forward pass for a single observation.
    pub fn predict(&self, obs: &[f64]) -> Result<(Vec<f64>, f64), NnError> {
        let x = ArrayView1::from(obs).insert_axis(Axis(0));
        let (out, _) = self.forward(x)?;
        Ok((out.mean.row(0).to_vec(), out.value[0]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    /// `batch x action_dim`
    pub mean: Array2<f64>,
    pub log_std: Array1<f64>,
    pub value: Array1<f64>,
}

/// Gradients of the loss with respect to each network output.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads {
    pub mean: Array2<f64>,
    pub log_std: Array1<f64>,
    pub value: Array1<f64>,
}

impl OutputGrads {
    pub fn zeros(batch: usize, action_dim: usize) -> Self {
        Self {
            mean: Array2::zeros((batch, action_dim)),
            log_std: Array1::zeros(action_dim),
            value: Array1::zeros(batch),
        }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    pre_activation: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct TrunkCache {
    layers: Vec<LayerCache>,
    features: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    actor: TrunkCache,
    critic: Option<TrunkCache>,
}

fn push_linear<'a>(name: String, l: &'a Linear, out: &mut Vec<(String, &'a [f64], Vec<usize>)>) {
    let s = l.weight.shape().to_vec();
    out.push((
        format!("{name}.weight"),
        l.weight.as_slice().expect("standard layout"),
        s,
    ));
    out.push((
        format!("{name}.bias"),
        l.bias.as_slice().expect("standard layout"),
        vec![l.bias.len()],
    ));
}

fn run_trunk(layers: &[Linear], obs: ArrayView2<f64>) -> TrunkCache {
    let mut x = obs.to_owned();
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let z = layer.apply(x.view());
        let h = z.mapv(leaky_relu);
        caches.push(LayerCache {
            input: x,
            pre_activation: z,
        });
        x = h;
    }
    TrunkCache {
        layers: caches,
        features: x,
    }
}

fn trunk_backward(layers: &[Linear], cache: &TrunkCache, mut upstream: Array2<f64>, grads: &mut [Linear]) {
    for (k, layer) in layers.iter().enumerate().rev() {
        let lc = &cache.layers[k];
        let mut dz = upstream;
        dz.zip_mut_with(&lc.pre_activation, |d, &z| *d *= leaky_relu_grad(z));
        grads[k].weight = dz.t().dot(&lc.input);
        grads[k].bias = dz.sum_axis(Axis(0));
        upstream = if k > 0 {
            dz.dot(&layer.weight)
        } else {
            Array2::zeros((0, 0))
        };
    }
}
