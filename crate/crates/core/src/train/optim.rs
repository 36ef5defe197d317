//! Adam with bias-corrected moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{lit, Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment buffers are kept in f64 regardless of the parameter type.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    shapes: Vec<Vec<usize>>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            shapes: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    fn check_shapes<T: Element>(&mut self, params: &[Tensor<T>]) -> Result<()> {
        if self.t == 0 && self.shapes.is_empty() {
            self.shapes = params.iter().map(|p| p.shape().to_vec()).collect();
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
            return Ok(());
        }
        if self.shapes.len() != params.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} tensors, got {}",
                self.shapes.len(),
                params.len()
            )));
        }
        for (i, (s, p)) in self.shapes.iter().zip(params).enumerate() {
            if s.as_slice() != p.shape() {
                return Err(Error::State(format!("tensor {i} changed shape from {s:?} to {:?}", p.shape())));
            }
        }
        Ok(())
    }

    /// One update `θ ← θ - lr · m̂ / (√v̂ + eps)` using the gradients stored on
    /// `params` (missing gradients count as zero).
    pub fn step<T: Element>(&mut self, params: &[Tensor<T>], lr: f64) -> Result<()> {
        self.check_shapes(params)?;
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter().zip(&mut self.m).zip(&mut self.v) {
            let Some(grad) = p.grad() else {
                // no gradient: decay the moments as if it were zero
                m.iter_mut().for_each(|x| *x *= beta1);
                v.iter_mut().for_each(|x| *x *= beta2);
                continue;
            };
            p.update_data(|theta| {
                for (((th, g), mi), vi) in theta.iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                    let th64 = th.to_f64().unwrap_or(f64::NAN);
                    let g = g.to_f64().unwrap_or(f64::NAN) + weight_decay * th64;
                    *mi = beta1 * *mi + (1.0 - beta1) * g;
                    *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                    let update = lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
                    *th = lit(th64 - update);
                }
            });
        }
        Ok(())
    }
}
