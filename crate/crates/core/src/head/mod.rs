//! One dynamic-MLP attention head: configuration, weights and forward paths.

pub mod act;
pub mod forward;
pub mod modifiers;
mod params;

pub use forward::{head_forward, multihead_forward, score, seq_forward, MixerParams};
pub use params::{DplrWeights, HeadParams, HeadWeights};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Base {
    Softmax,
    ReluL2,
    Glu,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadConfig {
    pub d: usize,
    pub n_head: usize,
    pub d_qk: usize,
    pub d_vo: usize,
    pub r_s: usize,
    /// Longest context the mixing parameters cover.
    pub l_max: usize,
    pub base: Base,
    pub use_rope: bool,
    pub use_conv: bool,
    pub use_core_gates: bool,
    pub tmix_1: bool,
    pub tmix_2: bool,
    pub lag_layout: bool,
    pub overparam: bool,
    pub eps: f64,
}

/// Depthwise convolution taps on each core.
pub const CONV_TAPS: usize = 4;

impl HeadConfig {
    /// Plain head: no modifiers, no mixing, full per-head ranks.
    pub fn plain(base: Base, d: usize, n_head: usize) -> Self {
        Self {
            d,
            n_head,
            d_qk: d / n_head.max(1),
            d_vo: d / n_head.max(1),
            r_s: 16,
            l_max: 64,
            base,
            use_rope: false,
            use_conv: false,
            use_core_gates: false,
            tmix_1: false,
            tmix_2: false,
            lag_layout: false,
            overparam: false,
            eps: 1e-12,
        }
    }

    /// Score branches: two (gate, scale) for HyperGLU, else one.
    pub fn branches(&self) -> usize {
        if self.base == Base::Glu {
            2
        } else {
            1
        }
    }

    /// Rank of each score branch. HyperGLU splits `d_qk` in two, rounding up.
    pub fn branch_rank(&self) -> usize {
        if self.base == Base::Glu {
            self.d_qk.div_ceil(2)
        } else {
            self.d_qk
        }
    }

    pub fn any_tmix(&self) -> bool {
        self.tmix_1 || self.tmix_2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.d == 0 || self.n_head == 0 {
            return bad("d and n_head must be positive");
        }
        if self.d_qk == 0 || self.d_vo == 0 {
            return bad("head ranks must be positive");
        }
        if self.d_qk * self.n_head > self.d || self.d_vo * self.n_head > self.d {
            return bad("per-head ranks times n_head exceed d");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.any_tmix() && self.r_s == 0 {
            return bad("temporal mixing needs r_s >= 1");
        }
        if self.l_max == 0 {
            return bad("l_max must be positive");
        }
        if self.use_rope && self.branch_rank() % 2 != 0 {
            return bad("rotary embedding needs an even routing rank per branch");
        }
        Ok(())
    }

    /// Scalar parameter count of one head.
    pub fn head_param_count(&self) -> usize {
        let (d, r) = (self.d, self.branch_rank());
        let gates = usize::from(self.use_core_gates);
        let mut n = self.branches() * (2 + gates) * d * r;
        n += (2 + gates) * d * self.d_vo;
        if self.use_conv {
            n += 2 * CONV_TAPS * d;
        }
        let tmix = usize::from(self.tmix_1) + usize::from(self.tmix_2);
        n += tmix * (d * self.r_s + 2 * self.l_max * self.r_s + self.l_max);
        n
    }

    /// Scalar parameter count of the whole mixing layer.
    pub fn param_count(&self) -> usize {
        self.n_head * self.head_param_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rejects_bad_shapes() {
        let mut c = HeadConfig::plain(Base::ReluL2, 8, 2);
        assert!(c.validate().is_ok());
        c.d_qk = 5;
        assert!(c.validate().is_err());
        c.d_qk = 4;
        c.eps = 0.0;
        assert!(c.validate().is_err());
        c.eps = 1e-12;
        c.base = Base::Glu;
        c.d_qk = 2;
        c.use_rope = true;
        assert!(c.validate().is_err(), "branch rank 1 cannot rotate");
    }

    #[test]
    fn glu_rank_rounds_up() {
        let mut c = HeadConfig::plain(Base::Glu, 8, 2);
        c.d_qk = 1;
        assert_eq!(c.branch_rank(), 1);
        c.d_qk = 8;
        assert_eq!(c.branch_rank(), 4);
    }
}
