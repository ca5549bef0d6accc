use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamSet};

/// AdamW with bias correction and decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(params: &ParamSet, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Matrix]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Dimension { op: "adamw", left: (grads.len(), 1), right: (params.len(), 1) });
        }
        for (id, g) in params.ids().zip(grads) {
            if g.shape() != params.get(id).shape() {
                return Err(Error::Dimension { op: "adamw", left: g.shape(), right: params.get(id).shape() });
            }
        }
        self.step += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for (k, id) in params.ids().enumerate() {
            let theta = params.get_mut(id).as_mut_slice();
            let (m, v) = (self.m[k].as_mut_slice(), self.v[k].as_mut_slice());
            for (j, &gj) in grads[k].as_slice().iter().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let update = (m[j] / c1) / (libm::sqrt(v[j] / c2) + self.eps);
                theta[j] -= self.lr * (update + self.weight_decay * theta[j]);
            }
        }
        Ok(())
    }
}
