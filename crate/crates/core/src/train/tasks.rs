//! Synthetic sequence tasks. Token 0 pads, 1 is noise or filler, 2 delimits;
//! content tokens are `3..vocab`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const PAD: usize = 0;
pub const NOISE: usize = 1;
pub const DELIM: usize = 2;
const FIRST_CONTENT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskKind {
    SelectiveCopy,
    IncontextRecall,
    NoisyRecall,
    Compression,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] =
        [TaskKind::SelectiveCopy, TaskKind::IncontextRecall, TaskKind::NoisyRecall, TaskKind::Compression];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SelectiveCopy => "selective_copy",
            TaskKind::IncontextRecall => "incontext_recall",
            TaskKind::NoisyRecall => "noisy_recall",
            TaskKind::Compression => "compression",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Task(format!("unknown task '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub vocab: usize,
    pub seq_len: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub seed: u64,
    /// Fraction of distractor pairs (noisy recall only).
    pub noise_frac: f64,
    /// Tokens to copy, key/value pairs, or tokens to reconstruct.
    pub n_items: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, vocab: usize, seq_len: usize, seed: u64) -> Self {
        Self {
            kind,
            vocab,
            seq_len,
            n_train: 4096,
            n_eval: 256,
            seed,
            noise_frac: if kind == TaskKind::NoisyRecall { 0.25 } else { 0.0 },
            n_items: 4,
        }
    }
}

/// One sequence; `target[i]` is scored only where `mask[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub input: Vec<usize>,
    pub target: Vec<usize>,
    pub mask: Vec<bool>,
}

impl Example {
    pub fn scored(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn validate(spec: &TaskSpec) -> Result<()> {
    if spec.vocab < 8 || spec.seq_len < 8 {
        return Err(Error::Task(format!("vocab {} and seq_len {} must both be at least 8", spec.vocab, spec.seq_len)));
    }
    if spec.n_items == 0 {
        return Err(Error::Task("n_items must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.noise_frac) {
        return Err(Error::Task(format!("noise_frac {} outside [0, 1)", spec.noise_frac)));
    }
    let (n, l, content) = (spec.n_items, spec.seq_len, spec.vocab - FIRST_CONTENT);
    let ok = match spec.kind {
        TaskKind::SelectiveCopy | TaskKind::Compression => 2 * n < l,
        TaskKind::IncontextRecall | TaskKind::NoisyRecall => 2 * n + 2 <= l && n <= content / 2,
    };
    if !ok {
        return Err(Error::Task(format!("{} items do not fit a {}-token {} sequence", n, l, spec.kind.name())));
    }
    Ok(())
}

/// Teacher-forced next-token example from a full token stream.
fn shifted(seq: Vec<usize>, scored_from: usize) -> Example {
    let l = seq.len();
    let mut target = vec![PAD; l];
    target[..l - 1].copy_from_slice(&seq[1..]);
    let mask = (0..l).map(|i| i + 1 >= scored_from && i + 1 < l).collect();
    Example { input: seq, target, mask }
}

fn content(rng: &mut Rng, vocab: usize) -> usize {
    FIRST_CONTENT + rng.below(vocab - FIRST_CONTENT)
}

/// `n` content tokens scattered among noise, a delimiter, then the copy.
fn selective_copy(spec: &TaskSpec, rng: &mut Rng) -> Example {
    let (n, l) = (spec.n_items, spec.seq_len);
    let region = l - n - 1;
    let mut slots: Vec<usize> = (0..region).collect();
    rng.shuffle(&mut slots);
    let mut chosen = slots[..n].to_vec();
    chosen.sort_unstable();
    let mut seq = vec![NOISE; region];
    let mut copied = Vec::with_capacity(n);
    for &p in &chosen {
        let tok = content(rng, spec.vocab);
        seq[p] = tok;
        copied.push(tok);
    }
    seq.push(DELIM);
    seq.extend(copied);
    shifted(seq, region + 1)
}

/// Key/value pairs, then query/answer pairs drawn from the real keys.
/// Distractor pairs (noisy variant) are never queried.
fn recall(spec: &TaskSpec, rng: &mut Rng, noisy: bool) -> Example {
    let (n, l) = (spec.n_items, spec.seq_len);
    let content_n = spec.vocab - FIRST_CONTENT;
    let n_keys = content_n / 2;
    let mut keys: Vec<usize> = (0..n_keys).map(|k| FIRST_CONTENT + k).collect();
    rng.shuffle(&mut keys);
    let pairs: Vec<(usize, usize)> =
        keys[..n].iter().map(|&k| (k, FIRST_CONTENT + n_keys + rng.below(content_n - n_keys))).collect();
    let distractors = if noisy { libm::floor(spec.noise_frac * n as f64) as usize } else { 0 };
    let distractors = distractors.min(n - 1);
    let mut seq = Vec::with_capacity(l);
    for &(k, v) in &pairs {
        seq.extend([k, v]);
    }
    let mut scored_from = Vec::new();
    if (l - seq.len()) % 2 == 1 {
        seq.push(NOISE);
    }
    while seq.len() < l {
        let (k, v) = pairs[distractors + rng.below(n - distractors)];
        seq.push(k);
        scored_from.push(seq.len());
        seq.push(v);
    }
    let mut ex = shifted(seq, l);
    for p in scored_from {
        ex.mask[p - 1] = true;
    }
    ex
}

/// `n` content tokens, a delimiter, then filler inputs while the targets
/// reconstruct the content.
fn compression(spec: &TaskSpec, rng: &mut Rng) -> Example {
    let (n, l) = (spec.n_items, spec.seq_len);
    let items: Vec<usize> = (0..n).map(|_| content(rng, spec.vocab)).collect();
    let mut input = items.clone();
    input.push(DELIM);
    input.resize(l, NOISE);
    let mut target = vec![PAD; l];
    let mut mask = vec![false; l];
    for (j, &tok) in items.iter().enumerate() {
        target[n + j] = tok;
        mask[n + j] = true;
    }
    Example { input, target, mask }
}

fn generate(spec: &TaskSpec, count: usize, rng: &mut Rng) -> Vec<Example> {
    (0..count)
        .map(|_| match spec.kind {
            TaskKind::SelectiveCopy => selective_copy(spec, rng),
            TaskKind::IncontextRecall => recall(spec, rng, false),
            TaskKind::NoisyRecall => recall(spec, rng, true),
            TaskKind::Compression => compression(spec, rng),
        })
        .collect()
}

/// Train and eval sets from independent streams of `spec.seed`.
pub fn gen_task(spec: &TaskSpec) -> Result<(Vec<Example>, Vec<Example>)> {
    validate(spec)?;
    let train = generate(spec, spec.n_train, &mut Rng::stream(spec.seed, 0));
    let eval = generate(spec, spec.n_eval, &mut Rng::stream(spec.seed, 1));
    Ok((train, eval))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: TaskKind) -> TaskSpec {
        let mut s = TaskSpec::new(kind, 16, 32, 7);
        s.n_train = 64;
        s.n_eval = 16;
        s
    }

    #[test]
    fn deterministic_and_disjoint_streams() {
        for kind in TaskKind::ALL {
            let (a, b) = gen_task(&spec(kind)).unwrap();
            assert_eq!(gen_task(&spec(kind)).unwrap(), (a.clone(), b.clone()));
            assert_ne!(a[..16], b[..]);
            for ex in a.iter().chain(&b) {
                assert_eq!(ex.input.len(), 32);
                assert!(ex.scored() > 0);
                assert!(ex.input.iter().chain(&ex.target).all(|&t| t < 16));
            }
        }
    }

    #[test]
    fn selective_copy_reproduces_content() {
        let (train, _) = gen_task(&spec(TaskKind::SelectiveCopy)).unwrap();
        for ex in &train {
            let kept: Vec<usize> = ex.input[..27].iter().copied().filter(|&t| t != NOISE).collect();
            let scored: Vec<usize> = (0..32).filter(|&i| ex.mask[i]).map(|i| ex.target[i]).collect();
            assert_eq!(kept, scored);
            assert_eq!(ex.input[27], DELIM);
        }
        let mut pure = spec(TaskKind::SelectiveCopy);
        pure.seq_len = 9;
        let (train, _) = gen_task(&pure).unwrap();
        assert!(train.iter().all(|ex| !ex.input.contains(&NOISE)));
    }

    #[test]
    fn recall_answers_are_values_of_queries() {
        let mut s = spec(TaskKind::IncontextRecall);
        s.n_items = 1;
        let (train, _) = gen_task(&s).unwrap();
        for ex in &train {
            let (k, v) = (ex.input[0], ex.input[1]);
            for i in (0..32).filter(|&i| ex.mask[i]) {
                assert_eq!((ex.input[i], ex.target[i]), (k, v));
            }
        }
        let mut s = spec(TaskKind::NoisyRecall);
        s.n_items = 4;
        s.noise_frac = 0.5;
        let (train, _) = gen_task(&s).unwrap();
        for ex in &train {
            let distractors = [ex.input[0], ex.input[2]];
            for i in (8..32).filter(|&i| ex.mask[i]) {
                assert!(!distractors.contains(&ex.input[i]));
                let slot = (0..4).find(|&j| ex.input[2 * j] == ex.input[i]).unwrap();
                assert_eq!(ex.target[i], ex.input[2 * slot + 1]);
            }
        }
    }

    #[test]
    fn compression_targets_are_the_prefix() {
        let (train, _) = gen_task(&spec(TaskKind::Compression)).unwrap();
        for ex in &train {
            assert_eq!(ex.input[4], DELIM);
            assert!(ex.input[5..].iter().all(|&t| t == NOISE));
            let scored: Vec<usize> = (0..32).filter(|&i| ex.mask[i]).map(|i| ex.target[i]).collect();
            assert_eq!(scored, ex.input[..4].to_vec());
        }
    }

    #[test]
    fn infeasible_specs() {
        let mut s = spec(TaskKind::SelectiveCopy);
        s.n_items = 16;
        assert!(matches!(gen_task(&s), Err(Error::Task(_))));
        let mut s = spec(TaskKind::IncontextRecall);
        s.n_items = 7;
        assert!(gen_task(&s).is_err());
        let mut s = spec(TaskKind::Compression);
        s.vocab = 7;
        assert!(gen_task(&s).is_err());
        assert!(TaskKind::from_name("copy").is_err());
        assert_eq!(TaskKind::from_name("noisy_recall").unwrap(), TaskKind::NoisyRecall);
    }
}
