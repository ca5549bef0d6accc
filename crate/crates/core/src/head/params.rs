use alloc::format;
use alloc::vec::Vec;

use super::{HeadConfig, CONV_TAPS};
use crate::dplr::DplrParams;
use crate::error::Result;
use crate::numerics::{Matrix, ParamId, ParamSet, Rng};

/// Temporal-mixing weights; `p` is stored as a `1 x L_max` row.
#[derive(Clone, Debug, PartialEq)]
pub struct DplrWeights<V> {
    pub p: V,
    pub a: V,
    pub b: V,
    pub w_s: V,
}

/// Per-head weights, generic over the value carrier so the same layout
/// describes concrete matrices, parameter ids and tape variables.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadWeights<V> {
    /// One entry per score branch (gate first, then scale for HyperGLU).
    pub w_q: Vec<V>,
    pub w_k: Vec<V>,
    /// Empty unless core gates are on.
    pub w_m1: Vec<V>,
    pub w_v: V,
    pub w_o: V,
    pub w_m2: Option<V>,
    /// `CONV_TAPS x d`; row `j` weighs the token `j` steps back.
    pub conv_k: Option<V>,
    pub conv_v: Option<V>,
    pub tmix1: Option<DplrWeights<V>>,
    pub tmix2: Option<DplrWeights<V>>,
}

pub type HeadParams = HeadWeights<Matrix>;

impl<V> DplrWeights<V> {
    pub fn map<U>(&self, mut f: impl FnMut(&V) -> U) -> DplrWeights<U> {
        DplrWeights { p: f(&self.p), a: f(&self.a), b: f(&self.b), w_s: f(&self.w_s) }
    }
}

impl<V> HeadWeights<V> {
    pub fn map<U>(&self, mut f: impl FnMut(&V) -> U) -> HeadWeights<U> {
        HeadWeights {
            w_q: self.w_q.iter().map(&mut f).collect(),
            w_k: self.w_k.iter().map(&mut f).collect(),
            w_m1: self.w_m1.iter().map(&mut f).collect(),
            w_v: f(&self.w_v),
            w_o: f(&self.w_o),
            w_m2: self.w_m2.as_ref().map(&mut f),
            conv_k: self.conv_k.as_ref().map(&mut f),
            conv_v: self.conv_v.as_ref().map(&mut f),
            tmix1: self.tmix1.as_ref().map(|t| t.map(&mut f)),
            tmix2: self.tmix2.as_ref().map(|t| t.map(&mut f)),
        }
    }

    /// Every value in a fixed order.
    pub fn values(&self) -> Vec<&V> {
        let mut out: Vec<&V> = Vec::new();
        out.extend(&self.w_q);
        out.extend(&self.w_k);
        out.extend(&self.w_m1);
        out.push(&self.w_v);
        out.push(&self.w_o);
        out.extend(&self.w_m2);
        out.extend(&self.conv_k);
        out.extend(&self.conv_v);
        for t in [&self.tmix1, &self.tmix2].into_iter().flatten() {
            out.extend([&t.p, &t.a, &t.b, &t.w_s]);
        }
        out
    }
}

impl DplrWeights<Matrix> {
    pub fn to_dplr(&self) -> Result<DplrParams> {
        DplrParams::new(self.p.as_slice().to_vec(), self.a.clone(), self.b.clone(), self.w_s.clone())
    }

    pub fn from_dplr(p: &DplrParams) -> Self {
        Self { p: Matrix::row_vector(&p.p), a: p.a.clone(), b: p.b.clone(), w_s: p.w_s.clone() }
    }
}

impl HeadParams {
    /// Training initialisation: projections and mixing factors `N(0, std²)`,
    /// `p = 0`, convolutions the delta kernel plus noise.
    pub fn init(cfg: &HeadConfig, rng: &mut Rng, std: f64) -> Result<Self> {
        Self::build(cfg, rng, std, false)
    }

    /// Every entry random (including `p` and all conv taps), for oracle tests.
    pub fn random(cfg: &HeadConfig, rng: &mut Rng, std: f64) -> Result<Self> {
        Self::build(cfg, rng, std, true)
    }

    fn build(cfg: &HeadConfig, rng: &mut Rng, std: f64, dense: bool) -> Result<Self> {
        cfg.validate()?;
        let (d, r, br) = (cfg.d, cfg.branch_rank(), cfg.branches());
        let mut m = |rows, cols| rng.normal_matrix(rows, cols, std);
        let w_q = (0..br).map(|_| m(d, r)).collect();
        let w_k = (0..br).map(|_| m(d, r)).collect();
        let w_m1 = if cfg.use_core_gates { (0..br).map(|_| m(d, r)).collect() } else { Vec::new() };
        let w_v = m(d, cfg.d_vo);
        let w_o = m(d, cfg.d_vo);
        let w_m2 = cfg.use_core_gates.then(|| m(d, cfg.d_vo));
        let conv = |m: &mut dyn FnMut(usize, usize) -> Matrix| {
            let mut k = m(CONV_TAPS, d);
            if !dense {
                k.row_mut(0).iter_mut().for_each(|v| *v += 1.0);
            }
            k
        };
        let conv_k = cfg.use_conv.then(|| conv(&mut m));
        let conv_v = cfg.use_conv.then(|| conv(&mut m));
        let mut tmix = |on: bool| {
            on.then(|| DplrWeights {
                p: if dense { m(1, cfg.l_max) } else { Matrix::zeros(1, cfg.l_max) },
                a: m(cfg.l_max, cfg.r_s),
                b: m(cfg.l_max, cfg.r_s),
                w_s: m(d, cfg.r_s),
            })
        };
        let tmix1 = tmix(cfg.tmix_1);
        let tmix2 = tmix(cfg.tmix_2);
        Ok(Self { w_q, w_k, w_m1, w_v, w_o, w_m2, conv_k, conv_v, tmix1, tmix2 })
    }

    pub fn scalar_count(&self) -> usize {
        self.values().iter().map(|m| m.len()).sum()
    }

    /// Adds every matrix to `set` under `prefix`, returning the id layout.
    pub fn register(&self, set: &mut ParamSet, prefix: &str) -> HeadWeights<ParamId> {
        let mut k = 0usize;
        self.map(|m| {
            k += 1;
            set.insert(format!("{prefix}.{k}"), m.clone())
        })
    }

    /// Reads the values of a registered layout back out of `set`.
    pub fn from_set(ids: &HeadWeights<ParamId>, set: &ParamSet) -> Self {
        ids.map(|&id| set.get(id).clone())
    }

    pub fn tmix1_params(&self) -> Result<Option<DplrParams>> {
        self.tmix1.as_ref().map(DplrWeights::to_dplr).transpose()
    }

    pub fn tmix2_params(&self) -> Result<Option<DplrParams>> {
        self.tmix2.as_ref().map(DplrWeights::to_dplr).transpose()
    }
}
