//! Length extension of the mixing parameters and what survives truncation.

use super::{instantiate_pool, MemoryPoolView};
use crate::error::{Error, Result};
use crate::head::forward::head_forward;
use crate::head::{DplrWeights, HeadConfig, HeadParams};
use crate::lagctx::LagContext;

/// Mixing parameters grown to length `t_new` with the canonical padding
/// (`p = -1`, zero factor rows), so new slots are switched off.
pub fn extend_head(p: &HeadParams, cfg: &HeadConfig, t_new: usize) -> Result<(HeadParams, HeadConfig)> {
    let mut out = p.clone();
    for w in [&mut out.tmix1, &mut out.tmix2].into_iter().flatten() {
        *w = DplrWeights::from_dplr(&w.to_dplr()?.extend(t_new)?);
    }
    let mut c = cfg.clone();
    c.l_max = t_new;
    Ok((out, c))
}

#[derive(Clone, Copy, Debug)]
pub struct ExtensionReport {
    /// `|o_T - o_t|` against the newest `t` tokens.
    pub diff_newest: f64,
    /// `|o_T - o_t|` against the oldest `t` tokens.
    pub diff_oldest: f64,
    /// Slots of the extended pool whose `u` and `v` rows are exactly zero.
    pub zero_slots: usize,
}

fn zero_slots(view: &MemoryPoolView) -> usize {
    (0..view.t).filter(|&i| view.u.row(i).iter().chain(view.v.row(i)).all(|&v| v == 0.0)).count()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Compares the head with length-`t` mixers on a `t`-token window of
/// `history` against the extended head on the whole history.
pub fn extension_check(x: &[f64], history: &LagContext, p: &HeadParams, cfg: &HeadConfig) -> Result<ExtensionReport> {
    let (t, big) = (cfg.l_max, history.t());
    if big < t {
        return Err(Error::Range { what: "history length", value: t, limit: big });
    }
    let (ext, ext_cfg) = extend_head(p, cfg, big)?;
    let o_big = head_forward(x, history, &ext, &ext_cfg)?;
    let newest = history.truncate(t)?;
    let oldest = LagContext::from_lag_rows(history.rows().slice_rows(big - t, big)?)?;
    Ok(ExtensionReport {
        diff_newest: max_diff(&o_big, &head_forward(x, &newest, p, cfg)?),
        diff_oldest: max_diff(&o_big, &head_forward(x, &oldest, p, cfg)?),
        zero_slots: zero_slots(&instantiate_pool(x, history, &ext, &ext_cfg)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::Base;
    use crate::numerics::Rng;
    use alloc::vec::Vec;

    fn cfg(base: Base, lag: bool) -> HeadConfig {
        let mut c = HeadConfig::plain(base, 8, 1);
        c.d_qk = 4;
        c.r_s = 3;
        c.l_max = 5;
        c.tmix_1 = true;
        c.tmix_2 = true;
        c.use_core_gates = true;
        c.lag_layout = lag;
        c
    }

    #[test]
    fn lag_layout_keeps_newest_tokens() {
        for base in [Base::ReluL2, Base::Glu] {
            let mut c = cfg(base, true);
            c.use_rope = base == Base::ReluL2;
            let mut rng = Rng::new(1);
            let p = HeadParams::random(&c, &mut rng, 0.5).unwrap();
            let hist = LagContext::from_forward(&rng.normal_matrix(10, 8, 1.0)).unwrap();
            let x: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
            let rep = extension_check(&x, &hist, &p, &c).unwrap();
            assert!(rep.diff_newest < 1e-12, "{rep:?}");
            assert_eq!(rep.zero_slots, 5);
        }
    }

    #[test]
    fn forward_layout_keeps_oldest_tokens() {
        let c = cfg(Base::ReluL2, false);
        let mut rng = Rng::new(2);
        let p = HeadParams::random(&c, &mut rng, 0.5).unwrap();
        let hist = LagContext::from_forward(&rng.normal_matrix(10, 8, 1.0)).unwrap();
        let x: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let rep = extension_check(&x, &hist, &p, &c).unwrap();
        assert!(rep.diff_oldest < 1e-12, "{rep:?}");
        assert!(rep.diff_newest > 1e-6, "{rep:?}");
        assert_eq!(rep.zero_slots, 5);
    }
}
