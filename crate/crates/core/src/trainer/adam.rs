use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.numel()]).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape("adam", &[params.len(), grads.len()], &[self.m.len()]));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.numel() != g.len() {
                return Err(Error::shape("adam", p.shape(), &[g.len()]));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *x -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::row(vec![1.0, -2.0])];
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(p[0].data(), &[1.0, -2.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![Tensor::row(vec![0.5, 0.5, 0.5])];
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &[vec![3.0, -0.2, 1e-3]]).unwrap();
        for (x, sign) in p[0].data().iter().zip([-1.0, 1.0, -1.0]) {
            assert!(((x - 0.5) - sign * 1e-3).abs() < 1e-7, "{x}");
        }
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut p = vec![Tensor::row(vec![1.0])];
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &p);
        for _ in 0..100 {
            let g = 2.0 * p[0].data()[0];
            adam.step(&mut p, &[vec![g]]).unwrap();
        }
        assert!(p[0].data()[0].abs() < 0.1);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![Tensor::row(vec![1.0])];
        let mut adam = Adam::new(AdamConfig::default(), &p);
        assert!(adam.step(&mut p, &[vec![1.0, 2.0]]).is_err());
    }
}
