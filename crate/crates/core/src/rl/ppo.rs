//! Clipped-surrogate PPO over any `ActorCritic`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::ops::Range;

use super::gae::{compute_gae, normalize};
use crate::error::{Error, NnError};
use crate::nn::{gaussian_entropy, gaussian_log_prob, ActorCritic, Adam};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub epochs: usize,
    pub minibatch_size: usize,
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub normalize_advantages: bool,
    /// Multiplier applied to env rewards before GAE; keeps value targets
    /// near unit scale.
    pub reward_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            minibatch_size: 250,
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.001,
            lr: 3e-4,
            max_grad_norm: 0.5,
            gamma: 0.99,
            lambda: 0.95,
            normalize_advantages: true,
            reward_scale: 0.1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        let pos = [self.clip, self.lr, self.max_grad_norm, self.gamma, self.lambda, self.reward_scale];
        if self.epochs == 0 || self.minibatch_size == 0 {
            return Err("ppo epochs and minibatch_size must be >= 1".into());
        }
        if pos.iter().any(|v| v.is_nan() || *v <= 0.0) || self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err("ppo coefficients must be positive".into());
        }
        if self.gamma > 1.0 || self.lambda > 1.0 {
            return Err("ppo gamma and lambda must be <= 1".into());
        }
        Ok(())
    }
}

/// Transitions of one iteration, stored as contiguous per-worker segments.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub input_dim: usize,
    pub action_dim: usize,
    pub inputs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    segments: Vec<(Range<usize>, f64)>,
    open_from: usize,
}

impl RolloutBuffer {
    pub fn new(input_dim: usize, action_dim: usize) -> Self {
        Self { input_dim, action_dim, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, input: &[f64], action: &[f64], log_prob: f64, value: f64, reward: f64, done: bool) {
        assert_eq!(input.len(), self.input_dim);
        assert_eq!(action.len(), self.action_dim);
        self.inputs.extend_from_slice(input);
        self.actions.extend_from_slice(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    /// Close the current segment; `bootstrap` values the state after its
    /// last transition.
    pub fn end_segment(&mut self, bootstrap: f64) {
        let end = self.len();
        if end > self.open_from {
            self.segments.push((self.open_from..end, bootstrap));
        }
        self.open_from = end;
    }

    /// Run GAE per segment, then optionally normalize advantages over the
    /// whole buffer. Returns use the raw advantages.
    pub fn finish(&mut self, gamma: f64, lambda: f64, normalize_advantages: bool) {
        self.end_segment(0.0);
        let n = self.len();
        self.advantages = vec![0.0; n];
        self.returns = vec![0.0; n];
        for (r, bootstrap) in &self.segments {
            let (a, ret) = compute_gae(
                &self.rewards[r.clone()],
                &self.values[r.clone()],
                &self.dones[r.clone()],
                *bootstrap,
                gamma,
                lambda,
            );
            self.advantages[r.clone()].copy_from_slice(&a);
            self.returns[r.clone()].copy_from_slice(&ret);
        }
        if normalize_advantages {
            normalize(&mut self.advantages);
        }
    }

    fn gather(&self, idx: &[usize]) -> Vec<f64> {
        let d = self.input_dim;
        idx.iter().flat_map(|&i| self.inputs[i * d..(i + 1) * d].iter().copied()).collect()
    }
}

/// Per-sample clipped objective `min(ρA, clip(ρ, 1−ε, 1+ε)A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Gradient of the PPO loss on the transitions `idx` (before clipping the
/// gradient norm).
pub fn minibatch_gradient<P: ActorCritic>(
    policy: &P,
    buf: &RolloutBuffer,
    idx: &[usize],
    cfg: &PpoConfig,
) -> Result<(Vec<f64>, PpoStats), NnError> {
    let b = idx.len();
    let bf = b as f64;
    let ad = buf.action_dim;
    let x = buf.gather(idx);
    let (means, values, cache) = policy.forward_batch(&x, b)?;
    let log_std = policy.log_std().to_vec();
    let inv_var: Vec<f64> = log_std.iter().map(|s| (-2.0 * s).exp()).collect();

    let mut d_mean = vec![0.0; b * ad];
    let mut d_value = vec![0.0; b];
    let mut d_log_std = vec![-cfg.entropy_coef; ad];
    let mut stats = PpoStats::default();
    for (k, &i) in idx.iter().enumerate() {
        let a = &buf.actions[i * ad..(i + 1) * ad];
        let mu = &means[k * ad..(k + 1) * ad];
        let lp = gaussian_log_prob(a, mu, &log_std);
        let ratio = (lp - buf.log_probs[i]).exp();
        let adv = buf.advantages[i];
        let unclipped = ratio * adv;
        let surr = clipped_surrogate(ratio, adv, cfg.clip);
        stats.policy_loss -= surr / bf;
        stats.approx_kl += (buf.log_probs[i] - lp) / bf;
        if (ratio - 1.0).abs() > cfg.clip {
            stats.clip_fraction += 1.0 / bf;
        }
        let g_lp = if unclipped <= surr { -unclipped / bf } else { 0.0 };
        for j in 0..ad {
            let diff = a[j] - mu[j];
            d_mean[k * ad + j] = g_lp * diff * inv_var[j];
            d_log_std[j] += g_lp * (diff * diff * inv_var[j] - 1.0);
        }
        let err = values[k] - buf.returns[i];
        stats.value_loss += err * err / bf;
        d_value[k] = cfg.value_coef * 2.0 * err / bf;
    }
    stats.entropy = gaussian_entropy(&log_std);

    let mut grad = vec![0.0; policy.num_params()];
    policy.backward_batch(&cache, &d_mean, &d_value, &mut grad);
    let r = policy.log_std_range();
    grad[r].iter_mut().zip(&d_log_std).for_each(|(g, d)| *g += d);
    stats.grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok((grad, stats))
}

/// Total PPO loss for `stats` under `cfg`.
pub fn total_loss(stats: &PpoStats, cfg: &PpoConfig) -> f64 {
    stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy
}

/// `epochs` passes of shuffled minibatch Adam steps on a finished buffer.
pub fn ppo_update<P: ActorCritic>(
    policy: &mut P,
    opt: &mut Adam,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut Rng,
    iteration: usize,
) -> Result<PpoStats, Error> {
    assert_eq!(buf.advantages.len(), buf.len(), "finish() the buffer before updating");
    let n = buf.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut sum = PpoStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let (mut grad, stats) = minibatch_gradient(policy, buf, chunk, cfg)?;
            let loss = total_loss(&stats, cfg);
            if !loss.is_finite() || !stats.grad_norm.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration,
                    detail: format!(
                        "policy {} value {} entropy {} grad norm {}",
                        stats.policy_loss, stats.value_loss, stats.entropy, stats.grad_norm
                    ),
                });
            }
            if stats.grad_norm > cfg.max_grad_norm {
                let s = cfg.max_grad_norm / stats.grad_norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            opt.step(policy.params_mut(), &grad);
            sum.policy_loss += stats.policy_loss;
            sum.value_loss += stats.value_loss;
            sum.entropy += stats.entropy;
            sum.approx_kl += stats.approx_kl;
            sum.clip_fraction += stats.clip_fraction;
            sum.grad_norm += stats.grad_norm;
            count += 1.0;
        }
    }
    Ok(PpoStats {
        policy_loss: sum.policy_loss / count,
        value_loss: sum.value_loss / count,
        entropy: sum.entropy / count,
        approx_kl: sum.approx_kl / count,
        clip_fraction: sum.clip_fraction / count,
        grad_norm: sum.grad_norm / count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gaussian_sample, AdamConfig, MlpPolicy};
    use crate::seed;
    use rand::Rng as _;

    #[test]
    fn clip_arithmetic() {
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
        assert_eq!(clipped_surrogate(1.0, 0.3, 0.2), 0.3);
    }

    fn toy_buffer(policy: &MlpPolicy, n: usize, seed_v: u64) -> RolloutBuffer {
        let mut rng = seed::stream(seed_v, "toy", 0);
        let mut buf = RolloutBuffer::new(policy.input_dim(), policy.action_dim());
        for t in 0..n {
            let x: Vec<f64> = (0..policy.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let out = policy.forward(&x).unwrap();
            let a = gaussian_sample(&out.mean, &out.log_std, &mut rng);
            let lp = gaussian_log_prob(&a, &out.mean, &out.log_std);
            buf.push(&x, &a, lp, out.value, rng.random_range(-1.0..1.0), t % 7 == 6);
        }
        buf.finish(0.99, 0.95, true);
        buf
    }

    #[test]
    fn first_minibatch_surrogate_is_mean_advantage() {
        let p = MlpPolicy::new(4, &[8], 2, &mut seed::stream(1, "ppo", 0));
        let buf = toy_buffer(&p, 40, 2);
        let idx: Vec<usize> = (0..40).collect();
        let (_, stats) = minibatch_gradient(&p, &buf, &idx, &PpoConfig::default()).unwrap();
        let mean_adv = buf.advantages.iter().sum::<f64>() / 40.0;
        assert!((stats.policy_loss + mean_adv).abs() < 1e-12);
        assert!(stats.approx_kl.abs() < 1e-12);
    }

    #[test]
    fn unclipped_single_epoch_equals_vanilla_policy_gradient() {
        let p = MlpPolicy::new(3, &[5, 4], 2, &mut seed::stream(3, "ppo", 0));
        let buf = toy_buffer(&p, 12, 4);
        let cfg = PpoConfig { clip: f64::INFINITY, value_coef: 0.0, entropy_coef: 0.0, ..Default::default() };
        let idx: Vec<usize> = (0..12).collect();
        let (grad, _) = minibatch_gradient(&p, &buf, &idx, &cfg).unwrap();
        // -(1/N) Σ A ∇log π(a|s), by central differences on the log-likelihood
        let objective = |q: &MlpPolicy| -> f64 {
            (0..12)
                .map(|i| {
                    let out = q.forward(&buf.inputs[i * 3..i * 3 + 3]).unwrap();
                    buf.advantages[i] * gaussian_log_prob(&buf.actions[i * 2..i * 2 + 2], &out.mean, &out.log_std)
                })
                .sum::<f64>()
                / -12.0
        };
        let mut q = p.clone();
        for (i, &g) in grad.iter().enumerate() {
            let orig = q.params()[i];
            q.params_mut()[i] = orig + 1e-6;
            let fp = objective(&q);
            q.params_mut()[i] = orig - 1e-6;
            let fm = objective(&q);
            q.params_mut()[i] = orig;
            let num = (fp - fm) / 2e-6;
            assert!((num - g).abs() < 1e-7 * (1.0 + num.abs()), "param {i}: {num} vs {g}");
        }
    }

    #[test]
    fn update_improves_surrogate_and_is_deterministic() {
        let p0 = MlpPolicy::new(4, &[16], 2, &mut seed::stream(5, "ppo", 0));
        let buf = toy_buffer(&p0, 500, 6);
        let cfg = PpoConfig::default();
        let run = || {
            let mut p = p0.clone();
            let mut opt = Adam::new(p.num_params(), AdamConfig::with_lr(cfg.lr));
            let stats = ppo_update(&mut p, &mut opt, &buf, &cfg, &mut seed::stream(7, "shuffle", 0), 0).unwrap();
            (p, stats)
        };
        let (p1, s1) = run();
        let (p2, _) = run();
        assert_eq!(p1.params(), p2.params());
        let idx: Vec<usize> = (0..500).collect();
        let (_, after) = minibatch_gradient(&p1, &buf, &idx, &cfg).unwrap();
        let (_, before) = minibatch_gradient(&p0, &buf, &idx, &cfg).unwrap();
        assert!(total_loss(&after, &cfg) < total_loss(&before, &cfg));
        assert!(s1.policy_loss.is_finite());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut p = MlpPolicy::new(4, &[8], 2, &mut seed::stream(8, "ppo", 0));
        let mut buf = toy_buffer(&p, 20, 9);
        buf.returns[3] = f64::NAN;
        let mut opt = Adam::new(p.num_params(), AdamConfig::default());
        let err = ppo_update(&mut p, &mut opt, &buf, &PpoConfig::default(), &mut seed::stream(1, "s", 0), 17);
        assert!(matches!(err, Err(Error::NonFiniteLoss { iteration: 17, .. })));
    }

    #[test]
    fn segments_do_not_leak() {
        let mut buf = RolloutBuffer::new(1, 1);
        buf.push(&[0.0], &[0.0], 0.0, 0.0, 1.0, false);
        buf.end_segment(0.0);
        buf.push(&[0.0], &[0.0], 0.0, 0.0, 100.0, false);
        buf.finish(0.99, 0.95, false);
        assert_eq!(buf.advantages[0], 1.0);
    }
}
