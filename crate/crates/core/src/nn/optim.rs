use serde::{Deserialize, Serialize};

use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Zero moments shaped like `shapes` (lengths of each parameter tensor).
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = usize>) -> Self {
        let (first, second) = shapes.into_iter().map(|n| (vec![T::zero(); n], vec![T::zero(); n])).unzip();
        Self { config, step: 0, first, second }
    }

    pub fn update<'a>(&mut self, params: impl IntoIterator<Item = (&'a mut [T], &'a mut [T])>) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let correction1 = T::from_f64(1.0 - c.beta1.powi(t));
        let correction2 = T::from_f64(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::from_f64(c.learning_rate), T::from_f64(c.epsilon));
        let one = T::one();
        for (((p, g), m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_rest() {
        let mut adam = Adam::<f64>::new(AdamConfig::default(), [3]);
        let mut p = vec![1.0, -2.0, 0.5];
        let mut g = vec![0.0; 3];
        adam.update([(&mut p[..], &mut g[..])]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert!(adam.first[0].iter().all(|&m| m == 0.0));
    }

    #[test]
    fn moments_decay_without_gradient() {
        let mut adam = Adam::<f64>::new(AdamConfig::default(), [1]);
        adam.first[0][0] = 1.0;
        adam.second[0][0] = 4.0;
        let (mut p, mut g) = (vec![0.0], vec![0.0]);
        adam.update([(&mut p[..], &mut g[..])]);
        assert!((adam.first[0][0] - 0.9).abs() < 1e-15);
        assert!((adam.second[0][0] - 4.0 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_by_hand() {
        // m = 0.1 g, v = 0.001 g^2; m_hat = g, v_hat = g^2; step = lr * g / (|g| + eps)
        let cfg = AdamConfig { learning_rate: 0.01, ..AdamConfig::default() };
        for g0 in [0.5f64, -3.0, 1e-3] {
            let mut adam = Adam::<f64>::new(cfg, [1]);
            let (mut p, mut g) = (vec![2.0], vec![g0]);
            adam.update([(&mut p[..], &mut g[..])]);
            let expected = 2.0 - 0.01 * g0 / (g0.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-12, "{} vs {}", p[0], expected);
        }
        // second step with the same gradient, worked out by hand for g = 0.5
        let mut adam = Adam::<f64>::new(cfg, [1]);
        let (mut p, mut g) = (vec![0.0], vec![0.5]);
        adam.update([(&mut p[..], &mut g[..])]);
        adam.update([(&mut p[..], &mut g[..])]);
        let m = 0.9 * 0.05 + 0.1 * 0.5;
        let v = 0.999 * 0.00025 + 0.001 * 0.25;
        let step2 = 0.01 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        let step1 = 0.01 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] + step1 + step2).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut adam = Adam::<f32>::new(AdamConfig::default(), [4]);
            let mut p = vec![0.1f32, 0.2, 0.3, 0.4];
            for k in 0..50 {
                let mut g: Vec<f32> = p.iter().map(|x| x * (k as f32).sin()).collect();
                adam.update([(&mut p[..], &mut g[..])]);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
