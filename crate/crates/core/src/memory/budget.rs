//! Rank-budget checks on a residual two-layer MLP `f(x) = x + ReLU(x W¹) W²`,
//! and the span of a low-rank readout perturbation of a head.

use alloc::vec::Vec;

use crate::error::Result;
use crate::head::forward::head_forward;
use crate::head::{Base, HeadConfig, HeadParams};
use crate::lagctx::LagContext;
use crate::numerics::linalg::{left_null_basis, numerical_rank, project_out, row_space_basis};
use crate::numerics::{Matrix, Rng};

fn residual_mlp(x: &Matrix, w1: &Matrix, w2: &Matrix) -> Result<Matrix> {
    x.matmul(w1)?.map(|v| v.max(0.0)).matmul(w2)
}

#[derive(Clone, Copy, Debug)]
pub struct BudgetReport {
    /// With rank-`r` `W²`: largest component of `f(x) - x` outside `Row(W²)`.
    pub subspace_residual: f64,
    /// With rank-`r` `W¹`: largest `|f(x + δ) - f(x) - δ|` over `δ W¹ = 0`.
    pub quotient_residual: f64,
    /// Dimension of `{δ : δ W¹ = 0}`.
    pub quotient_dim: usize,
}

fn low_rank(rng: &mut Rng, rows: usize, cols: usize, r: usize) -> Result<Matrix> {
    rng.normal_matrix(rows, r, 1.0).matmul(&rng.normal_matrix(r, cols, 1.0))
}

pub fn budget_asymmetry_check(seed: u64, d: usize, h: usize, r: usize) -> Result<BudgetReport> {
    let mut rng = Rng::new(seed);
    let n = 32;
    let xs = rng.normal_matrix(n, d, 1.0);

    let w1 = rng.normal_matrix(d, h, 1.0);
    let w2 = low_rank(&mut rng, h, d, r)?;
    let basis = row_space_basis(&w2, 1e-10);
    let delta = residual_mlp(&xs, &w1, &w2)?;
    let subspace_residual = project_out(&delta, &basis).max_abs();

    let w1 = low_rank(&mut rng, d, h, r)?;
    let w2 = rng.normal_matrix(h, d, 1.0);
    let null = left_null_basis(&w1, 1e-10);
    let mut quotient_residual = 0.0f64;
    if null.rows() > 0 {
        let coeff = rng.normal_matrix(n, null.rows(), 1.0);
        let deltas = coeff.matmul(&null)?;
        let shifted = xs.add(&deltas)?;
        let fx = xs.add(&residual_mlp(&xs, &w1, &w2)?)?;
        let fs = shifted.add(&residual_mlp(&shifted, &w1, &w2)?)?;
        quotient_residual = fs.sub(&fx)?.sub(&deltas)?.max_abs();
    }
    Ok(BudgetReport { subspace_residual, quotient_residual, quotient_dim: null.rows() })
}

/// Numerical rank of `Δo` collected over random contexts and queries when
/// the output projection receives a rank-`r` perturbation.
pub fn lora_update_span_check(seed: u64, d: usize, t: usize, r: usize) -> Result<usize> {
    let mut rng = Rng::new(seed);
    let mut cfg = HeadConfig::plain(Base::ReluL2, d, 1);
    cfg.r_s = 2;
    cfg.l_max = t.max(1);
    cfg.use_core_gates = true;
    cfg.tmix_1 = true;
    cfg.tmix_2 = true;
    let p = HeadParams::random(&cfg, &mut rng, 0.5)?;
    let mut q = p.clone();
    q.w_o = p.w_o.add(&low_rank(&mut rng, d, cfg.d_vo, r)?)?;
    let samples = 4 * d;
    let mut rows: Vec<f64> = Vec::with_capacity(samples * d);
    for _ in 0..samples {
        let ctx = LagContext::from_forward(&rng.normal_matrix(t, d, 1.0))?;
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let base = head_forward(&x, &ctx, &p, &cfg)?;
        let tuned = head_forward(&x, &ctx, &q, &cfg)?;
        rows.extend(tuned.iter().zip(&base).map(|(a, b)| a - b));
    }
    Ok(numerical_rank(&Matrix::from_vec(samples, d, rows)?, 1e-8))
}
