use alloc::format;

use super::oracle::*;
use super::{Outcome, Poison, VerifyConfig, Worst};
use crate::error::Result;
use crate::head::Base;
use crate::labels::TABLE_LABELS;
use crate::memory::geometry::{collinearity_residual, static_slice_residual};
use crate::memory::warped_boundary_example;
use crate::numerics::Rng;

/// Runs `check` on seeds `seed, seed+1, ...` and keeps the worst residual.
fn sweep(cfg: &VerifyConfig, tol: f64, mut check: impl FnMut(u64) -> Result<f64>) -> Result<Outcome> {
    let mut worst = Worst::new(cfg.seed);
    for k in 0..cfg.trials as u64 {
        let seed = cfg.seed.wrapping_add(k);
        worst.see(check(seed)?, seed, alloc::string::String::new);
    }
    Ok(worst.finish(tol))
}

pub fn fast_dense(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 1e-12, |s| dplr_fast_dense(s, 128, 32))
}

pub fn extension(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 0.0, dplr_extension)
}

pub fn op_count(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 0.0, dplr_op_count)
}

pub fn gate_invariance(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 0.0, |s| Ok(gate_invariance_violations(s)? as f64))
}

pub fn dynamic_mlp(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 1e-12, head_dynamic_mlp)
}

pub fn baseline(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 1e-12, head_baseline)
}

pub fn decoupling(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 0.0, |s| Ok(glu_decoupling_violations(s)? as f64))
}

pub fn causality(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 0.0, head_causality)
}

pub fn incremental(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 1e-12, head_incremental)
}

pub fn readout(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 1e-10, |s| pool_readout(s, None))
}

pub fn tv(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 0.0, |s| Ok(tv_violation(s)? as f64))
}

pub fn extension_truncation(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 1e-10, truncation_residual)
}

/// Static boundaries must be affine (residual below tolerance) and the
/// warped example must not be; a failure of the latter reports infinity.
pub fn polyhedral(cfg: &VerifyConfig) -> Result<Outcome> {
    let tol = 1e-3;
    let ex = warped_boundary_example(3.0)?;
    let mut rng = Rng::new(cfg.seed);
    let mut predicate_ok = true;
    for _ in 0..200 {
        let x = [rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)];
        predicate_ok &= ex.gate(&x, 1)? == ex.predicate(&x);
    }
    let warped = collinearity_residual(&ex.boundary(-2.0, 2.0, 80));
    let bases = [Base::ReluL2, Base::Softmax, Base::Glu];
    let mut out = sweep(cfg, tol, |s| static_slice_residual(s, bases[(s % 3) as usize]))?;
    if !predicate_ok || warped <= tol {
        out.residual = f64::INFINITY;
        out.detail = format!("warped example: residual {warped:.3e}, predicate match {predicate_ok}");
    }
    Ok(out)
}

pub fn registers(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 1e-12, register_residual)
}

/// Every block shape with `T <= 10`, then random shapes up to `T = 128`.
pub fn bijectivity(cfg: &VerifyConfig) -> Result<Outcome> {
    let skew = cfg.poison == Some(Poison::Skew);
    let mut rng = Rng::new(cfg.seed);
    let mut shapes = alloc::vec::Vec::new();
    for t in 1..=10 {
        for row_start in 0..t {
            for m in 1..=t - row_start {
                shapes.push((m, row_start, t));
            }
        }
    }
    for _ in 0..cfg.trials {
        let t = rng.range_inclusive(1, 128);
        let row_start = rng.below(t);
        shapes.push((rng.range_inclusive(1, t - row_start), row_start, t));
    }
    let mut worst = Worst::new(cfg.seed);
    for (i, &(m, row_start, t)) in shapes.iter().enumerate() {
        // The poison corrupts a single block, the first with two live entries.
        let bad = bijectivity_violations(m, row_start, t, skew && i == 2, &mut rng);
        worst.see(bad as f64, cfg.seed, || format!("M={m} T={t} row_start={row_start}"));
    }
    Ok(worst.finish(0.0))
}

/// Table labels in turn at `d = 32`, `T = 24`, block heights `1, 7, T`.
pub fn equivalence(cfg: &VerifyConfig) -> Result<Outcome> {
    let t = 24;
    let mut worst = Worst::new(cfg.seed);
    for k in 0..cfg.trials.max(1) {
        let label = TABLE_LABELS[k % TABLE_LABELS.len()];
        let seed = cfg.seed.wrapping_add(k as u64);
        for m in [1, 7, t] {
            worst.see(blocked_naive(label, t, m, seed)?, seed, || format!("label={label} M={m}"));
        }
    }
    Ok(worst.finish(1e-12))
}

pub fn remask(cfg: &VerifyConfig) -> Result<Outcome> {
    sweep(cfg, 0.0, remask_residual)
}
