use std::num::NonZeroUsize;
use std::thread;

use hyperhead_core::numerics::Matrix;
use hyperhead_core::train::runner::example_grad;
use hyperhead_core::train::{Example, GradEvaluator, TinyModel};
use hyperhead_core::Result;

use crate::{CliError, CliResult};

pub const THREADS_ENV: &str = "HYPERHEAD_THREADS";

/// Per-sequence gradients on scoped worker threads. Each worker takes a
/// contiguous slice of the batch and results are concatenated in batch
/// order, so sums match [`hyperhead_core::train::Sequential`] bit for bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Threaded {
    pub workers: usize,
}

impl Threaded {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }

    /// Available parallelism, capped by `HYPERHEAD_THREADS` when set.
    pub fn from_env() -> CliResult<Self> {
        let hw = thread::available_parallelism().map_or(1, NonZeroUsize::get);
        let cap = match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?,
            Err(_) => hw,
        };
        Ok(Self::new(hw.min(cap)))
    }
}

impl GradEvaluator for Threaded {
    fn per_example(&self, model: &TinyModel, batch: &[Example], total: usize) -> Result<Vec<(f64, Vec<Matrix>)>> {
        let workers = self.workers.min(batch.len()).max(1);
        if workers == 1 {
            return batch.iter().map(|ex| example_grad(model, ex, total)).collect();
        }
        let chunk = batch.len().div_ceil(workers);
        thread::scope(|s| {
            let handles: Vec<_> = batch
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|ex| example_grad(model, ex, total)).collect::<Result<Vec<_>>>()))
                .collect();
            let mut out = Vec::with_capacity(batch.len());
            for h in handles {
                out.extend(h.join().expect("gradient worker panicked")?);
            }
            Ok(out)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hyperhead_core::head::{Base, HeadConfig};
    use hyperhead_core::train::runner::batch_grad;
    use hyperhead_core::train::{gen_task, ModelConfig, Sequential, TaskKind, TaskSpec};

    #[test]
    fn matches_sequential_exactly() {
        let head = HeadConfig::plain(Base::ReluL2, 8, 2);
        let model = TinyModel::new(ModelConfig::new(head, 8, 1), 1).unwrap();
        let mut spec = TaskSpec::new(TaskKind::IncontextRecall, 8, 8, 2);
        spec.n_items = 1;
        spec.n_train = 16;
        spec.n_eval = 4;
        let (train, _) = gen_task(&spec).unwrap();
        let (l0, g0) = batch_grad(&model, &train[..7], &Sequential).unwrap();
        for w in [1, 2, 3, 16] {
            let (l, g) = batch_grad(&model, &train[..7], &Threaded::new(w)).unwrap();
            assert_eq!(l, l0);
            assert_eq!(g, g0);
        }
    }
}
