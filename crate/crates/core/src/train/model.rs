//! Tiny residual stack: embedding, `n_blocks` of (mixer, MLP) with
//! pre-normalisation, final normalisation and unembedding.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::tasks::Example;
use crate::blocked::blocked_forward;
use crate::error::{Error, Result};
use crate::head::{HeadConfig, HeadParams, HeadWeights};
use crate::numerics::gradcheck::Objective;
use crate::numerics::ops::GatherMap;
use crate::numerics::{Backend, Eager, ParamId, ParamSet, Rng};

const NORM_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab: usize,
    pub n_blocks: usize,
    pub head: HeadConfig,
    /// Block height for the blocked mixer (clamped to the sequence length).
    pub block: usize,
    pub init_std: f64,
}

impl ModelConfig {
    pub fn new(head: HeadConfig, vocab: usize, n_blocks: usize) -> Self {
        Self { vocab, n_blocks, head, block: 128, init_std: 0.02 }
    }
}

#[derive(Clone, Debug)]
struct BlockIds {
    heads: Vec<HeadWeights<ParamId>>,
    mlp_in: ParamId,
    mlp_out: ParamId,
}

#[derive(Clone, Debug)]
pub struct TinyModel {
    pub cfg: ModelConfig,
    pub params: ParamSet,
    embed: ParamId,
    blocks: Vec<BlockIds>,
    unembed: ParamId,
}

impl TinyModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.head.validate()?;
        if cfg.vocab == 0 || cfg.n_blocks == 0 {
            return Err(Error::Config("vocab and n_blocks must be positive".into()));
        }
        let d = cfg.head.d;
        let std = cfg.init_std;
        let mut rng = Rng::stream(seed, 3);
        let mut params = ParamSet::new();
        let embed = params.insert("embed", rng.normal_matrix(cfg.vocab, d, std));
        let mut blocks = Vec::with_capacity(cfg.n_blocks);
        for b in 0..cfg.n_blocks {
            let mut heads = Vec::with_capacity(cfg.head.n_head);
            for h in 0..cfg.head.n_head {
                let hp = HeadParams::init(&cfg.head, &mut rng, std)?;
                heads.push(hp.register(&mut params, &format!("b{b}.h{h}")));
            }
            let mlp_in = params.insert(format!("b{b}.mlp_in"), rng.normal_matrix(d, 2 * d, std));
            let mlp_out = params.insert(format!("b{b}.mlp_out"), rng.normal_matrix(2 * d, d, std));
            blocks.push(BlockIds { heads, mlp_in, mlp_out });
        }
        let unembed = params.insert("unembed", rng.normal_matrix(d, cfg.vocab, std));
        Ok(Self { cfg, params, embed, blocks, unembed })
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    fn rms_norm<B: Backend>(b: &mut B, x: &B::V, d: usize) -> B::V {
        let n = b.row_l2norm(x, d as f64 * NORM_EPS);
        b.scale(&n, libm::sqrt(d as f64))
    }

    /// `T x vocab` logits; `vars` is indexed like [`TinyModel::params`].
    pub fn logits<B: Backend>(&self, b: &mut B, vars: &[B::V], tokens: &[usize]) -> Result<B::V> {
        let t = tokens.len();
        if t == 0 {
            return Err(Error::EmptyContext);
        }
        if let Some(&bad) = tokens.iter().find(|&&tok| tok >= self.cfg.vocab) {
            return Err(Error::Range { what: "token", value: bad, limit: self.cfg.vocab });
        }
        let d = self.cfg.head.d;
        let m = self.cfg.block.min(t);
        let mut x = b.gather(&vars[self.embed.0], &Arc::new(GatherMap::rows_of(self.cfg.vocab, d, tokens)))?;
        for blk in &self.blocks {
            let heads: Vec<HeadWeights<B::V>> =
                blk.heads.iter().map(|h| h.map(|id| vars[id.0].clone())).collect();
            let n = Self::rms_norm(b, &x, d);
            let mixed = blocked_forward(b, &heads, &self.cfg.head, &n, m)?;
            x = b.add(&x, &mixed)?;
            let n = Self::rms_norm(b, &x, d);
            let hid = b.matmul(&n, &vars[blk.mlp_in.0])?;
            let hid = b.relu(&hid);
            let out = b.matmul(&hid, &vars[blk.mlp_out.0])?;
            x = b.add(&x, &out)?;
        }
        let n = Self::rms_norm(b, &x, d);
        b.matmul(&n, &vars[self.unembed.0])
    }

    /// Mean cross entropy over the scored positions, scaled by `weight`.
    pub fn loss<B: Backend>(&self, b: &mut B, vars: &[B::V], ex: &Example, weight: f64) -> Result<B::V> {
        let logits = self.logits(b, vars, &ex.input)?;
        let w: Arc<[f64]> = ex.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let ce = b.cross_entropy(&logits, &Arc::from(ex.target.as_slice()), &w)?;
        Ok(if weight == 1.0 { ce } else { b.scale(&ce, weight) })
    }

    /// Argmax predictions at every position.
    pub fn predict(&self, tokens: &[usize]) -> Result<Vec<usize>> {
        let logits = self.logits(&mut Eager, self.params.values(), tokens)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }

    /// Masked cross entropy and the number of scored positions predicted
    /// exactly, from one forward pass.
    pub fn score_example(&self, ex: &Example) -> Result<(f64, usize)> {
        let mut b = Eager;
        let logits = self.logits(&mut b, self.params.values(), &ex.input)?;
        let w: Arc<[f64]> = ex.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let ce = b.cross_entropy(&logits, &Arc::from(ex.target.as_slice()), &w)?;
        let correct = (0..logits.rows()).filter(|&i| ex.mask[i] && argmax(logits.row(i)) == ex.target[i]).count();
        Ok((ce.as_slice()[0], correct))
    }

    pub fn eval_loss(&self, ex: &Example) -> Result<f64> {
        let l = self.loss(&mut Eager, self.params.values(), ex, 1.0)?;
        Ok(l.as_slice()[0])
    }
}

fn argmax(row: &[f64]) -> usize {
    (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
}

/// Batch loss objective: masked cross entropy averaged over all scored tokens.
pub struct BatchLoss<'a> {
    pub model: &'a TinyModel,
    pub batch: &'a [Example],
}

impl Objective for BatchLoss<'_> {
    fn eval<B: Backend>(&self, b: &mut B, params: &[B::V]) -> Result<B::V> {
        let total: usize = self.batch.iter().map(Example::scored).sum();
        let mut acc: Option<B::V> = None;
        for ex in self.batch {
            let l = self.model.loss(b, params, ex, ex.scored() as f64 / total as f64)?;
            acc = Some(match acc {
                None => l,
                Some(a) => b.add(&a, &l)?,
            });
        }
        acc.ok_or_else(|| Error::Task("empty batch".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::Base;
    use crate::labels::{parse_label, to_config};
    use crate::numerics::gradcheck::grad_check;
    use crate::train::tasks::{gen_task, TaskKind, TaskSpec};
    use alloc::vec;

    fn small(label: &str) -> TinyModel {
        let mut head = to_config(&parse_label(label).unwrap(), 8, 2, 2).unwrap();
        head.l_max = 8;
        let mut cfg = ModelConfig::new(head, 8, 2);
        cfg.init_std = 0.3;
        TinyModel::new(cfg, 1).unwrap()
    }

    #[test]
    fn forward_is_causal() {
        let m = small("G-cg-q-12o");
        let a = [3, 4, 5, 6, 7, 3];
        let mut b = a;
        b[4] = 1;
        let la = m.logits(&mut Eager, m.params.values(), &a).unwrap();
        let lb = m.logits(&mut Eager, m.params.values(), &b).unwrap();
        assert_eq!(la.slice_rows(0, 4).unwrap(), lb.slice_rows(0, 4).unwrap());
        assert!(la.slice_rows(4, 6).unwrap().max_abs_diff(&lb.slice_rows(4, 6).unwrap()) > 0.0);
    }

    #[test]
    fn param_count_is_deterministic() {
        let a = small("R-c-12o!");
        let b = small("R-c-12o!");
        assert_eq!(a.param_count(), b.param_count());
        let head = a.cfg.head.param_count();
        assert_eq!(a.param_count(), 2 * 8 * 8 + 2 * (head + 2 * 8 * 16));
    }

    #[test]
    fn unscored_targets_do_not_move_the_loss() {
        let mut spec = TaskSpec::new(TaskKind::IncontextRecall, 8, 8, 3);
        spec.n_items = 1;
        let (train, _) = gen_task(&spec).unwrap();
        let m = small("R");
        let ex = &train[0];
        let mut other = ex.clone();
        for i in 0..other.target.len() {
            if !other.mask[i] {
                other.target[i] = (other.target[i] + 3) % 8;
            }
        }
        assert_eq!(m.eval_loss(ex).unwrap(), m.eval_loss(&other).unwrap());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let ex = Example { input: vec![3, 1, 4, 1, 5, 2], target: vec![1, 4, 1, 5, 2, 6], mask: vec![true; 6] };
        for label in ["S", "R-cg-q-12o"] {
            let m = small(label);
            assert_eq!(m.cfg.head.base, if label == "S" { Base::Softmax } else { Base::ReluL2 });
            let batch = [ex.clone()];
            let rep = grad_check(&BatchLoss { model: &m, batch: &batch }, &m.params, 1e-5).unwrap();
            assert!(rep.global_rel_err() < 1e-4, "{label}: {}", rep.global_rel_err());
        }
    }
}
