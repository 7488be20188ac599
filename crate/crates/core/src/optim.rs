//! Gradient descent with heavy-ball momentum.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug)]
pub struct Momentum {
    pub lr: f64,
    pub mu: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip: Option<f64>,
    velocity: Vec<Matrix>,
}

impl Momentum {
    pub fn new(lr: f64, mu: f64, clip: Option<f64>) -> Self {
        Self {
            lr,
            mu,
            clip,
            velocity: Vec::new(),
        }
    }

    /// `v <- mu v + g; w <- w - lr v`. Missing gradients count as zero.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Option<&Matrix>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument {
                op: "momentum_step",
                detail: alloc::format!("{} params, {} grads", params.len(), grads.len()),
            });
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        }
        let norm_sq: f64 = grads
            .iter()
            .flatten()
            .map(|g| g.as_slice().iter().map(|x| x * x).sum::<f64>())
            .sum();
        let scale = match self.clip {
            Some(c) if norm_sq > c * c => c / libm::sqrt(norm_sq),
            _ => 1.0,
        };
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if v.shape() != p.shape() {
                return Err(Error::Dimension {
                    op: "momentum_step",
                    lhs: p.shape(),
                    rhs: v.shape(),
                });
            }
            let vs = v.as_mut_slice();
            match g {
                Some(g) => {
                    for (vi, gi) in vs.iter_mut().zip(g.as_slice()) {
                        *vi = self.mu * *vi + scale * gi;
                    }
                }
                None => vs.iter_mut().for_each(|vi| *vi *= self.mu),
            }
            for (w, vi) in p.as_mut_slice().iter_mut().zip(vs.iter()) {
                *w -= self.lr * vi;
            }
        }
        Ok(())
    }
}
