//! Multiply counts of the temporal mixing added to one decoding step.

use alloc::vec::Vec;

use crate::dplr::{DplrParams, MulCount};
use crate::error::{Error, Result};
use crate::head::{HeadConfig, HeadParams};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub t: usize,
    /// Multiplies spent in the DPLR mixes of every head for one step.
    pub extra_muls: u64,
    /// `extra_muls / (t · r_s · n_head)`.
    pub constant: f64,
    /// Per-step gate values kept across heads.
    pub extra_state: usize,
}

/// Counts one step at each context length in `ts`. With `zero_factors` the
/// low-rank factors are zero and `p = 0`, so the mixes reduce to identities.
pub fn bench_counts(cfg: &HeadConfig, ts: &[usize], seed: u64, zero_factors: bool) -> Result<Vec<BenchRow>> {
    if !cfg.any_tmix() {
        return Err(Error::Config("bench needs a label with temporal mixing".into()));
    }
    let mut rng = Rng::new(seed);
    let t_max = ts.iter().copied().max().unwrap_or(0);
    let mut cfg = cfg.clone();
    cfg.l_max = cfg.l_max.max(t_max);
    let heads: Vec<HeadParams> =
        (0..cfg.n_head).map(|_| HeadParams::init(&cfg, &mut rng, 0.02)).collect::<Result<_>>()?;
    let x: Vec<f64> = (0..cfg.d).map(|_| rng.normal()).collect();
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let y: Vec<f64> = (0..t).map(|_| rng.normal()).collect();
        let mut count = MulCount(0);
        let mut state = 0;
        for h in &heads {
            let pick = |d: Option<DplrParams>| -> Result<Option<DplrParams>> {
                let Some(mut d) = d else { return Ok(None) };
                if zero_factors {
                    d = DplrParams::new(alloc::vec![0.0; d.l_max()], d.a.scale(0.0), d.b.scale(0.0), d.w_s.clone())?;
                }
                Ok(Some(d.slice_prefix(t)?))
            };
            if let Some(d) = pick(h.tmix1_params()?)? {
                let s = d.gate_vector(&x)?;
                state += s.len();
                for _ in 0..cfg.branches() {
                    d.mix_right_counted(&y, &s, &mut count)?;
                }
            }
            if let Some(d) = pick(h.tmix2_params()?)? {
                let s = d.gate_vector(&x)?;
                state += s.len();
                d.mix_right_transpose_counted(&y, &s, &mut count)?;
            }
        }
        let denom = (t * cfg.r_s * cfg.n_head) as f64;
        rows.push(BenchRow { t, extra_muls: count.0, constant: count.0 as f64 / denom, extra_state: state });
    }
    Ok(rows)
}
