//! Adam optimizer over flat parameter tensors.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::Tensor;

pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// First/second moment buffers, aligned with the parameter list.
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Bias-correction step counter.
    pub t: u64,
}

impl Adam {
    pub fn new(params: &[Tensor], beta1: f64, beta2: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps: 1e-8,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &[Tensor], lr: f64) {
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - crate::math::powf(self.beta1, self.t as f64);
        let bc2 = 1.0 - crate::math::powf(self.beta2, self.t as f64);
        for (i, p) in params.iter().enumerate() {
            let grad = p.grad();
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            p.update_values(|vals| {
                for j in 0..vals.len() {
                    let g = grad[j];
                    m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                    v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                    let mhat = m[j] / bc1;
                    let vhat = v[j] / bc2;
                    vals[j] -= lr * mhat / (crate::math::sqrt(vhat) + self.eps);
                }
            });
        }
    }

    pub fn zero_grad(&self, params: &[Tensor]) {
        for p in params {
            p.zero_grad();
        }
    }
}
