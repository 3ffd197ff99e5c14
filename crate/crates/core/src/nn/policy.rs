//! Actor-critic interface shared by the MLP teacher and the TCN baseline,
//! plus diagonal-Gaussian helpers.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Range;

use super::tcn::TcnConfig;
use crate::error::NnError;
use crate::seed::Rng;

/// Architecture tag stored in checkpoint headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSpec {
    MlpPolicy { input_dim: usize, hidden: Vec<usize>, action_dim: usize },
    TcnPolicy { actor: TcnConfig, critic: TcnConfig },
    TcnEncoder { tcn: TcnConfig },
}

impl NetworkSpec {
    pub fn name(&self) -> &'static str {
        match self {
            NetworkSpec::MlpPolicy { .. } => "mlp_policy",
            NetworkSpec::TcnPolicy { .. } => "tcn_policy",
            NetworkSpec::TcnEncoder { .. } => "tcn_encoder",
        }
    }
}

/// A Gaussian policy with a value head over one flat parameter vector.
pub trait ActorCritic: Clone + Send + Sync {
    type Cache;

    fn input_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Position of the log-std entries inside `params`.
    fn log_std_range(&self) -> Range<usize>;
    /// Action means (`batch × action_dim`) and values (`batch`).
    fn forward_batch(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>, Self::Cache), NnError>;
    /// Accumulate gradients of the network heads; log-std gradients are the
    /// caller's job.
    fn backward_batch(&self, cache: &Self::Cache, d_mean: &[f64], d_value: &[f64], grad: &mut [f64]);
    fn spec(&self) -> NetworkSpec;
    /// Tensor names and shapes in parameter order.
    fn param_names(&self) -> Vec<(String, Vec<usize>)>;

    fn log_std(&self) -> &[f64] {
        &self.params()[self.log_std_range()]
    }

    fn num_params(&self) -> usize {
        self.params().len()
    }
}

pub fn gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), s)| {
            let z = (x - m) / s.exp();
            -0.5 * z * z - s - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

pub fn gaussian_sample(mean: &[f64], log_std: &[f64], rng: &mut Rng) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(m, s)| {
            let n: f64 = StandardNormal.sample(rng);
            m + s.exp() * n
        })
        .collect()
}
