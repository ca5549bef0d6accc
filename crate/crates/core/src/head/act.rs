//! Activations over one score vector `h` (length `t`).

use alloc::vec::Vec;

use crate::numerics::ops::softplus_scalar;

/// `ρ = sqrt(‖z‖² + eps)`.
pub fn rho(z: &[f64], eps: f64) -> f64 {
    libm::sqrt(z.iter().map(|v| v * v).sum::<f64>() + eps)
}

pub fn l2norm(z: &[f64], eps: f64) -> Vec<f64> {
    let r = rho(z, eps);
    z.iter().map(|v| v / r).collect()
}

pub fn act_relu_l2(z: &[f64], eps: f64) -> Vec<f64> {
    l2norm(z, eps).into_iter().map(|v| v.max(0.0)).collect()
}

/// `Softplus(h_scale) ⊙ ReLU(L2Norm(h_gate))`.
pub fn act_hyperglu(h_scale: &[f64], h_gate: &[f64], eps: f64) -> Vec<f64> {
    act_relu_l2(h_gate, eps).into_iter().zip(h_scale).map(|(g, &s)| softplus_scalar(s) * g).collect()
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mx = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e: Vec<f64> = z.iter().map(|&v| libm::exp(v - mx)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Indices with strictly positive value.
pub fn active_set(a: &[f64]) -> Vec<usize> {
    a.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i).collect()
}
