use serde::{Deserialize, Serialize};

use crate::model::Param;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients.
    pub fn step(&mut self, params: Vec<&mut Param<T>>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let lr = T::of(c.learning_rate / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(c.eps);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                p.value[i] -= lr * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::<f64>::zeros("w", &[3]);
        p.grad = vec![2.0, -0.5, 0.0];
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(vec![&mut p]);
        assert!((p.value[0] + 1e-3).abs() < 1e-9);
        assert!((p.value[1] - 1e-3).abs() < 1e-9);
        assert_eq!(p.value[2], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param::<f64>::filled("w", &[1], 3.0);
        let mut opt = Adam::new(AdamConfig { learning_rate: 0.05, ..Default::default() });
        for _ in 0..2000 {
            p.grad[0] = 2.0 * (p.value[0] - 1.0);
            opt.step(vec![&mut p]);
        }
        assert!((p.value[0] - 1.0).abs() < 1e-3);
    }
}
