use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self { config, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut a = Adam::new(3, AdamConfig::default());
        let mut p = [1.0, -2.0, 0.5];
        a.step(&mut p, &[0.0; 3]);
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut a = Adam::new(2, AdamConfig::with_lr(1e-3));
        let mut p = [0.0, 0.0];
        a.step(&mut p, &[3.0, -0.01]);
        assert!((p[0] + 1e-3).abs() < 1e-10);
        assert!((p[1] - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn two_scalar_steps_match_reference() {
        let mut a = Adam::new(1, AdamConfig::with_lr(0.1));
        let mut p = [1.0];
        a.step(&mut p, &[0.5]);
        assert!((p[0] - 0.900000002).abs() < 1e-12);
        a.step(&mut p, &[-0.2]);
        assert!((p[0] - 0.8654394181165108).abs() < 1e-12);
    }
}
