//! Fully connected networks over an external flat parameter slice.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::ops::Range;

use super::policy::{ActorCritic, NetworkSpec};
use super::tensor::{gemm_nn, gemm_nt, gemm_tn};
use crate::error::NnError;
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        }
    }

    /// Multiply `d` by the derivative, expressed through the activation output `a`.
    fn backprop(self, a: &[f64], d: &mut [f64]) {
        match self {
            Activation::Tanh => d.iter_mut().zip(a).for_each(|(d, a)| *d *= 1.0 - a * a),
            Activation::Relu => d.iter_mut().zip(a).for_each(|(d, a)| {
                if *a <= 0.0 {
                    *d = 0.0
                }
            }),
        }
    }
}

/// Layer widths and activation; weights live in a caller-owned slice laid
/// out as `[W0 (out×in), b0, W1, b1, ...]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub activation: Activation,
}

/// Activations saved by `Mlp::forward`. `acts[0]` is the input; the last
/// entry is the linear output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub batch: usize,
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds at least the input")
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output widths");
        Self { sizes, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Tensor names and shapes in parameter order.
    pub fn param_names(&self, prefix: &str) -> Vec<(String, Vec<usize>)> {
        self.sizes
            .windows(2)
            .enumerate()
            .flat_map(|(l, w)| {
                [(format!("{prefix}.{l}.weight"), vec![w[1], w[0]]), (format!("{prefix}.{l}.bias"), vec![w[1]])]
            })
            .collect()
    }

    fn layer_ranges(&self) -> Vec<(Range<usize>, Range<usize>)> {
        let mut off = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let wr = off..off + w[0] * w[1];
                let br = wr.end..wr.end + w[1];
                off = br.end;
                (wr, br)
            })
            .collect()
    }

    /// Gaussian weights with std `gain/√fan_in` (hidden gain 1), zero biases.
    pub fn init(&self, params: &mut [f64], output_gain: f64, rng: &mut Rng) {
        let ranges = self.layer_ranges();
        let last = ranges.len() - 1;
        for (l, (wr, br)) in ranges.into_iter().enumerate() {
            let gain = if l == last { output_gain } else { 1.0 };
            let std = gain / (self.sizes[l] as f64).sqrt();
            if std > 0.0 {
                let n = Normal::new(0.0, std).expect("finite std");
                params[wr].iter_mut().for_each(|p| *p = n.sample(rng));
            } else {
                params[wr].fill(0.0);
            }
            params[br].fill(0.0);
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64], batch: usize) -> MlpCache {
        assert_eq!(x.len(), batch * self.input_dim());
        assert_eq!(params.len(), self.num_params());
        let ranges = self.layer_ranges();
        let last = ranges.len() - 1;
        let mut acts = vec![x.to_vec()];
        for (l, (wr, br)) in ranges.into_iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let bias = &params[br];
            let mut z: Vec<f64> = (0..batch).flat_map(|_| bias.iter().copied()).collect();
            gemm_nt(batch, n_in, n_out, &acts[l], &params[wr], 1.0, &mut z);
            if l != last {
                self.activation.apply(&mut z);
            }
            acts.push(z);
        }
        MlpCache { batch, acts }
    }

    /// Accumulate parameter gradients into `grad` and optionally write the
    /// input gradient into `dx`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, dout: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        let batch = cache.batch;
        assert_eq!(dout.len(), batch * self.output_dim());
        assert_eq!(grad.len(), self.num_params());
        let ranges = self.layer_ranges();
        let mut delta = dout.to_vec();
        let mut dx = dx;
        for (l, (wr, br)) in ranges.into_iter().enumerate().rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            gemm_tn(batch, n_out, n_in, &delta, &cache.acts[l], 1.0, &mut grad[wr.clone()]);
            let gb = &mut grad[br];
            for row in delta.chunks_exact(n_out) {
                gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
            if l == 0 {
                if let Some(dx) = dx.take() {
                    gemm_nn(batch, n_out, n_in, &delta, &params[wr], 0.0, dx);
                }
                break;
            }
            let mut d_in = vec![0.0; batch * n_in];
            gemm_nn(batch, n_out, n_in, &delta, &params[wr], 0.0, &mut d_in);
            self.activation.backprop(&cache.acts[l], &mut d_in);
            delta = d_in;
        }
    }
}

/// Gaussian actor-critic with separate tanh MLPs and a state-independent
/// log standard deviation. Parameters are `[actor | critic | log_std]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    actor: Mlp,
    critic: Mlp,
    params: Vec<f64>,
}

pub const INITIAL_LOG_STD: f64 = -std::f64::consts::LN_2;

/// Output of a single policy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

pub struct MlpPolicyCache {
    actor: MlpCache,
    critic: MlpCache,
}

impl MlpPolicy {
    /// All-zero network (log std included).
    pub fn zeros(input_dim: usize, hidden: &[usize], action_dim: usize) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        let mut critic_sizes = sizes.clone();
        sizes.push(action_dim);
        critic_sizes.push(1);
        let actor = Mlp::new(sizes, Activation::Tanh);
        let critic = Mlp::new(critic_sizes, Activation::Tanh);
        let n = actor.num_params() + critic.num_params() + action_dim;
        Self { actor, critic, params: vec![0.0; n] }
    }

    pub fn new(input_dim: usize, hidden: &[usize], action_dim: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden, action_dim);
        let (a, c) = (p.actor.num_params(), p.critic.num_params());
        p.actor.init(&mut p.params[..a], 0.01, rng);
        p.critic.init(&mut p.params[a..a + c], 1.0, rng);
        p.params[a + c..].fill(INITIAL_LOG_STD);
        p
    }

    pub fn from_params(input_dim: usize, hidden: &[usize], action_dim: usize, params: Vec<f64>) -> Result<Self, NnError> {
        let mut p = Self::zeros(input_dim, hidden, action_dim);
        if params.len() != p.params.len() {
            return Err(NnError::ShapeMismatch(format!(
                "MLP policy expects {} parameters, got {}",
                p.params.len(),
                params.len()
            )));
        }
        p.params = params;
        Ok(p)
    }

    pub fn hidden(&self) -> &[usize] {
        &self.actor.sizes[1..self.actor.sizes.len() - 1]
    }

    fn split(&self) -> (Range<usize>, Range<usize>) {
        let a = self.actor.num_params();
        (0..a, a..a + self.critic.num_params())
    }

    pub fn forward(&self, input: &[f64]) -> Result<PolicyOutput, NnError> {
        let (mean, value, _) = self.forward_batch(input, 1)?;
        Ok(PolicyOutput { mean, log_std: self.log_std().to_vec(), value: value[0] })
    }

    /// Deterministic action mean.
    pub fn mean(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_width(input.len(), 1)?;
        let (ar, _) = self.split();
        Ok(self.actor.forward(&self.params[ar], input, 1).acts.pop().unwrap())
    }

    fn check_width(&self, len: usize, batch: usize) -> Result<(), NnError> {
        if len != batch * self.actor.input_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "policy input width {} expected, got {}",
                self.actor.input_dim(),
                len as f64 / batch.max(1) as f64
            )));
        }
        Ok(())
    }
}

impl ActorCritic for MlpPolicy {
    type Cache = MlpPolicyCache;

    fn input_dim(&self) -> usize {
        self.actor.input_dim()
    }

    fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn log_std_range(&self) -> Range<usize> {
        let n = self.params.len();
        n - self.action_dim()..n
    }

    fn forward_batch(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>, Self::Cache), NnError> {
        self.check_width(x.len(), batch)?;
        let (ar, cr) = self.split();
        let actor = self.actor.forward(&self.params[ar], x, batch);
        let critic = self.critic.forward(&self.params[cr], x, batch);
        Ok((actor.output().to_vec(), critic.output().to_vec(), MlpPolicyCache { actor, critic }))
    }

    fn backward_batch(&self, cache: &Self::Cache, d_mean: &[f64], d_value: &[f64], grad: &mut [f64]) {
        let (ar, cr) = self.split();
        self.actor.backward(&self.params[ar.clone()], &cache.actor, d_mean, &mut grad[ar], None);
        self.critic.backward(&self.params[cr.clone()], &cache.critic, d_value, &mut grad[cr], None);
    }

    fn param_names(&self) -> Vec<(String, Vec<usize>)> {
        let mut names = self.actor.param_names("actor");
        names.extend(self.critic.param_names("critic"));
        names.push(("log_std".into(), vec![self.action_dim()]));
        names
    }

    fn spec(&self) -> NetworkSpec {
        NetworkSpec::MlpPolicy {
            input_dim: self.input_dim(),
            hidden: self.hidden().to_vec(),
            action_dim: self.action_dim(),
        }
    }
}
