use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// A learnable matrix with its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Matrix,
    #[serde(skip)]
    grad: Option<Matrix>,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        Self { value, grad: None }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    /// Accumulated gradient (zeros if nothing was accumulated).
    pub fn grad(&self) -> Matrix {
        self.grad
            .clone()
            .unwrap_or_else(|| Matrix::zeros(self.value.rows(), self.value.cols()))
    }

    pub fn accumulate(&mut self, g: &Matrix) -> Result<()> {
        match &mut self.grad {
            Some(acc) => acc.add_assign(g),
            None => {
                if g.shape() != self.value.shape() {
                    return Err(Error::shape(
                        "Parameter::accumulate",
                        format!("gradient {:?} for value {:?}", g.shape(), self.shape()),
                    ));
                }
                self.grad = Some(g.clone());
                Ok(())
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

/// Adam with decoupled weight decay. Moment buffers are allocated lazily on
/// the first step, in the order parameters are passed.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update using each parameter's accumulated gradient and
    /// then clears the gradients. Rejects non-finite gradients before any
    /// parameter is touched.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }

        for (k, p) in params.iter().enumerate() {
            if let Some(g) = &p.grad {
                if let Some(pos) = g.as_slice().iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "gradient of parameter {k} at flat index {pos} (step {})",
                        self.step + 1
                    )));
                }
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for ((p, m), v) in params
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let g = p.grad();
            let values = p.value.as_mut_slice();
            for (((w, &gi), mi), vi) in values
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *w);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Parameter {
        Parameter::new(Matrix::filled(1, 1, v))
    }

    #[test]
    fn zero_gradient_without_decay_leaves_params_unchanged() {
        let mut p = scalar_param(0.7);
        let mut opt = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        for _ in 0..5 {
            p.accumulate(&Matrix::zeros(1, 1)).unwrap();
            opt.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value[(0, 0)], 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t=1: m̂ = g, v̂ = g², step = lr·g/(|g|+eps)
        let mut p = scalar_param(0.0);
        let mut opt = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        p.accumulate(&Matrix::filled(1, 1, 1.0)).unwrap();
        opt.step(&mut [&mut p]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.value[(0, 0)] - expected).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_step_size_approaches_lr() {
        let mut p = scalar_param(0.0);
        let mut opt = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..2000 {
            p.accumulate(&Matrix::filled(1, 1, 0.3)).unwrap();
            opt.step(&mut [&mut p]).unwrap();
            last_step = prev - p.value[(0, 0)];
            prev = p.value[(0, 0)];
        }
        assert!((last_step - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut p = scalar_param(1.0);
        let mut opt = Adam::new(AdamConfig::default());
        p.accumulate(&Matrix::filled(1, 1, f64::NAN)).unwrap();
        assert!(matches!(opt.step(&mut [&mut p]), Err(Error::NonFinite(_))));
        assert_eq!(p.value[(0, 0)], 1.0);
    }

    #[test]
    fn decoupled_weight_decay_shrinks_params() {
        let mut p = scalar_param(2.0);
        let mut opt = Adam::new(AdamConfig {
            weight_decay: 0.1,
            ..AdamConfig::default()
        });
        opt.step(&mut [&mut p]).unwrap();
        assert!((p.value[(0, 0)] - (2.0 - 1e-3 * 0.1 * 2.0)).abs() < 1e-15);
    }
}
