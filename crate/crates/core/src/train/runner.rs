//! Deterministic training loop.

use alloc::vec::Vec;

use super::model::TinyModel;
use super::optim::AdamW;
use super::tasks::{gen_task, Example, TaskSpec};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 500, lr: 3e-4, batch: 32, weight_decay: 0.01, seed: 0, eval_every: 50 }
    }
}

/// One metrics row. `loss` is the masked cross entropy on the eval set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record {
    pub step: usize,
    pub loss: f64,
    pub eval_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Metrics {
    pub records: Vec<Record>,
    /// Set when a training loss went non-finite; training stops there.
    pub diverged: bool,
}

impl Metrics {
    pub fn final_acc(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.eval_acc)
    }

    /// `step,loss,eval_acc` rows with a header line.
    pub fn to_csv(&self) -> alloc::string::String {
        use core::fmt::Write;
        let mut s = alloc::string::String::from("step,loss,eval_acc\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{:.12e},{:.6}", r.step, r.loss, r.eval_acc);
        }
        s
    }
}

/// Per-sequence loss values and gradients. Implementations must return the
/// results in batch order so the sum is reproducible.
pub trait GradEvaluator {
    fn per_example(&self, model: &TinyModel, batch: &[Example], total: usize) -> Result<Vec<(f64, Vec<Matrix>)>>;
}

/// One tape per sequence, evaluated in order on the calling thread.
pub struct Sequential;

/// Loss and parameter gradients of one sequence, weighted by its share of
/// the `total` scored tokens.
pub fn example_grad(model: &TinyModel, ex: &Example, total: usize) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let vars = tape.params(&model.params);
    let out = model.loss(&mut tape, &vars, ex, ex.scored() as f64 / total as f64)?;
    let grads = tape.backward(out)?.param_grads(&tape, &model.params)?;
    Ok((tape.scalar(out), grads))
}

impl GradEvaluator for Sequential {
    fn per_example(&self, model: &TinyModel, batch: &[Example], total: usize) -> Result<Vec<(f64, Vec<Matrix>)>> {
        batch.iter().map(|ex| example_grad(model, ex, total)).collect()
    }
}

/// Batch loss and summed gradients, equal to differentiating [`super::BatchLoss`].
pub fn batch_grad(model: &TinyModel, batch: &[Example], eval: &dyn GradEvaluator) -> Result<(f64, Vec<Matrix>)> {
    let total: usize = batch.iter().map(Example::scored).sum();
    if total == 0 {
        return Err(Error::Task("batch has no scored positions".into()));
    }
    let mut loss = 0.0;
    let mut grads = model.params.zeros_like();
    for (l, g) in eval.per_example(model, batch, total)? {
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi)?;
        }
    }
    Ok((loss, grads))
}

/// Eval-set masked cross entropy and exact-match accuracy on scored tokens.
pub fn evaluate(model: &TinyModel, set: &[Example]) -> Result<(f64, f64)> {
    let (mut loss, mut correct, mut total) = (0.0, 0usize, 0usize);
    for ex in set {
        let n = ex.scored();
        if n == 0 {
            continue;
        }
        let (l, c) = model.score_example(ex)?;
        loss += l * n as f64;
        correct += c;
        total += n;
    }
    if total == 0 {
        return Err(Error::Task("eval set has no scored positions".into()));
    }
    Ok((loss / total as f64, correct as f64 / total as f64))
}

pub fn train_model(
    model: &mut TinyModel,
    task: &TaskSpec,
    cfg: &TrainConfig,
    eval: &dyn GradEvaluator,
) -> Result<Metrics> {
    if cfg.steps == 0 || cfg.batch == 0 || cfg.eval_every == 0 {
        return Err(Error::Config("steps, batch and eval_every must be positive".into()));
    }
    if task.seq_len > model.cfg.head.l_max && model.cfg.head.any_tmix() {
        return Err(Error::Range { what: "seq_len", value: task.seq_len, limit: model.cfg.head.l_max });
    }
    let (train, eval_set) = gen_task(task)?;
    let mut rng = Rng::stream(cfg.seed, 4);
    let mut opt = AdamW::new(&model.params, cfg.lr, cfg.weight_decay);
    let mut metrics = Metrics::default();
    let record = |model: &TinyModel, step: usize, metrics: &mut Metrics| -> Result<()> {
        let (loss, eval_acc) = evaluate(model, &eval_set)?;
        metrics.records.push(Record { step, loss, eval_acc });
        Ok(())
    };
    record(model, 0, &mut metrics)?;
    for step in 1..=cfg.steps {
        let batch: Vec<Example> = (0..cfg.batch).map(|_| train[rng.below(train.len())].clone()).collect();
        let (loss, grads) = batch_grad(model, &batch, eval)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
            metrics.diverged = true;
            break;
        }
        opt.step(&mut model.params, &grads)?;
        if step % cfg.eval_every == 0 || step == cfg.steps {
            record(model, step, &mut metrics)?;
        }
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::{Base, HeadConfig};
    use crate::numerics::gradcheck::Objective;
    use crate::numerics::Eager;
    use crate::train::model::{BatchLoss, ModelConfig};
    use crate::train::tasks::TaskKind;

    fn tiny(seed: u64) -> TinyModel {
        let head = HeadConfig::plain(Base::ReluL2, 8, 2);
        TinyModel::new(ModelConfig::new(head, 8, 1), seed).unwrap()
    }

    fn task() -> TaskSpec {
        let mut t = TaskSpec::new(TaskKind::IncontextRecall, 8, 8, 5);
        t.n_items = 1;
        t.n_train = 64;
        t.n_eval = 16;
        t
    }

    #[test]
    fn batch_grad_matches_objective() {
        let m = tiny(1);
        let (train, _) = gen_task(&task()).unwrap();
        let (loss, _) = batch_grad(&m, &train[..4], &Sequential).unwrap();
        let direct = BatchLoss { model: &m, batch: &train[..4] }.eval(&mut Eager, m.params.values()).unwrap();
        assert!((loss - direct.as_slice()[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_freezes_the_loss() {
        let mut m = tiny(2);
        let cfg = TrainConfig { steps: 6, lr: 0.0, batch: 4, eval_every: 2, ..TrainConfig::default() };
        let metrics = train_model(&mut m, &task(), &cfg, &Sequential).unwrap();
        assert_eq!(metrics.records.len(), 4);
        let l0 = metrics.records[0].loss;
        assert!(metrics.records.iter().all(|r| (r.loss - l0).abs() <= 1e-12));
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = TrainConfig { steps: 5, lr: 1e-2, batch: 4, eval_every: 5, ..TrainConfig::default() };
        let a = train_model(&mut tiny(3), &task(), &cfg, &Sequential).unwrap();
        let b = train_model(&mut tiny(3), &task(), &cfg, &Sequential).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("step,loss,eval_acc\n0,"));
        assert!(train_model(&mut tiny(3), &task(), &TrainConfig { steps: 0, ..cfg }, &Sequential).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = tiny(4);
        let id = m.params.find("unembed").unwrap();
        m.params.get_mut(id).as_mut_slice()[0] = f64::NAN;
        let cfg = TrainConfig { steps: 3, batch: 2, ..TrainConfig::default() };
        let metrics = train_model(&mut m, &task(), &cfg, &Sequential).unwrap();
        assert!(metrics.diverged);
    }
}
