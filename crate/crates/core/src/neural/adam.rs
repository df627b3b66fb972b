use serde::{Deserialize, Serialize};

use super::DenseNet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated lazily to match
/// the parameter tensors they are first applied to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update over a list of `(params, grads)` tensors.
    pub fn update(&mut self, tensors: Vec<(&mut [f64], &[f64])>) -> Result<()> {
        for (_, g) in &tensors {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("gradient".into()));
            }
        }
        if self.first.is_empty() {
            self.first = tensors.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != tensors.len()
            || self
                .first
                .iter()
                .zip(&tensors)
                .any(|(m, (p, _))| m.len() != p.len())
        {
            return Err(Error::Shape(
                "optimizer state does not match parameters".into(),
            ));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((params, grads), (m, v)) in tensors
            .into_iter()
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for i in 0..params.len() {
                let g = grads[i] + weight_decay * params[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                params[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_net(&mut self, net: &mut DenseNet) -> Result<()> {
        self.update(net.param_grad_pairs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::new(AdamConfig::default());
        let mut p = [1.0];
        opt.update(vec![(&mut p[..], &[0.3][..])]).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/|g|
        assert!((p[0] - (1.0 - 2e-4)).abs() < 1e-10);
    }

    #[test]
    fn minimizes_square() {
        let mut opt = Adam::new(AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        });
        let mut x = [5.0];
        for _ in 0..2000 {
            let g = [2.0 * x[0]];
            opt.update(vec![(&mut x[..], &g[..])]).unwrap();
        }
        assert!(x[0].abs() < 1e-2, "x = {}", x[0]);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::new(AdamConfig::default());
        let mut p = [0.25, -1.0];
        opt.update(vec![(&mut p[..], &[0.0, 0.0][..])]).unwrap();
        assert_eq!(p, [0.25, -1.0]);
    }

    #[test]
    fn rejects_nan_gradient() {
        let mut opt = Adam::new(AdamConfig::default());
        let mut p = [1.0];
        assert!(opt.update(vec![(&mut p[..], &[f64::NAN][..])]).is_err());
        assert_eq!(p[0], 1.0);
    }

    #[test]
    fn rejects_changed_shapes() {
        let mut opt = Adam::new(AdamConfig::default());
        let mut p = [1.0];
        opt.update(vec![(&mut p[..], &[1.0][..])]).unwrap();
        let mut q = [1.0, 2.0];
        assert!(opt.update(vec![(&mut q[..], &[1.0, 1.0][..])]).is_err());
    }
}
