//! Subcommand bodies. Each writes its report to `out`.

use std::io::Write;

use hyperhead_core::bench::bench_counts;
use hyperhead_core::head::{Base, HeadConfig, HeadParams};
use hyperhead_core::labels::{parse_label, render_label, to_config, Label};
use hyperhead_core::memory::{instantiate_pool, tv_mass, Measure};
use hyperhead_core::numerics::Rng;
use hyperhead_core::train::{train_model, ModelConfig, TaskKind, TaskSpec, TinyModel, TrainConfig};
use hyperhead_core::verify::{self, VerifyConfig};
use hyperhead_core::LagContext;

use crate::config::RunConfig;
use crate::output::write_atomic;
use crate::parallel::Threaded;
use crate::{CliError, CliResult};

pub const GRAMMAR: &str = "label := base ('-' seg)* '!'?  base: S | R | G  seg: feats (p c g) | rank (q | v) | tmix (1 | 2 | 12, optional o)";

/// Vocabulary and depth of the training model.
pub const VOCAB: usize = 16;
pub const N_BLOCKS: usize = 2;

fn label_of(s: &str) -> CliResult<Label> {
    parse_label(s).map_err(|e| CliError::Usage(format!("{e}\n  {GRAMMAR}")))
}

/// Head configuration for the run's label with `l_max = seq_len`.
pub fn head_config(cfg: &RunConfig) -> CliResult<HeadConfig> {
    cfg.validate()?;
    let mut head = to_config(&label_of(&cfg.label)?, cfg.d, cfg.n_head, cfg.r_s)?;
    head.l_max = cfg.seq_len;
    head.eps = cfg.eps;
    head.validate()?;
    Ok(head)
}

pub fn verify(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let suites = verify::select(cfg.filter.as_deref());
    if suites.is_empty() {
        return Err(CliError::Usage(format!("no suite matches filter '{}'", cfg.filter.as_deref().unwrap_or(""))));
    }
    let vc = VerifyConfig { seed: cfg.seed, trials: cfg.trials, poison: cfg.poison };
    let mut failed = Vec::new();
    for s in &suites {
        let o = (s.run)(&vc)?;
        let status = if o.passed() { "PASS" } else { "FAIL" };
        write!(out, "{status} {:<34} worst={:.3e} tol={:.1e} seed={}", s.id(), o.residual, o.tol, o.seed)?;
        if !o.detail.is_empty() {
            write!(out, " {}", o.detail)?;
        }
        writeln!(out)?;
        if !o.passed() {
            let mut what = format!("{} (seed {})", s.id(), o.seed);
            if !o.detail.is_empty() {
                what.push_str(&format!(" {}", o.detail));
            }
            failed.push(what);
        }
    }
    writeln!(out, "{}/{} suites passed", suites.len() - failed.len(), suites.len())?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(failed.join(", ")))
    }
}

pub fn metrics_file_name(label: &str, task: &str, seed: u64) -> String {
    format!("{label}-{task}-{seed}.csv")
}

pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    if cfg.steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    let head = head_config(cfg)?;
    let kind = TaskKind::from_name(&cfg.task)
        .map_err(|_| CliError::Usage(format!("unknown task '{}' (selective_copy, incontext_recall, noisy_recall, compression)", cfg.task)))?;
    let mut mc = ModelConfig::new(head, VOCAB, N_BLOCKS);
    mc.block = cfg.block;
    let mut model = TinyModel::new(mc, cfg.seed)?;
    let task = TaskSpec::new(kind, VOCAB, cfg.seq_len, cfg.seed);
    let tc = TrainConfig { steps: cfg.steps, seed: cfg.seed, ..TrainConfig::default() };
    let eval = Threaded::from_env()?;
    let metrics = train_model(&mut model, &task, &tc, &eval)?;
    let name = metrics_file_name(&cfg.label, kind.name(), cfg.seed);
    let path = write_atomic(&cfg.out, &name, &metrics.to_csv()).map_err(CliError::Runtime)?;
    writeln!(out, "metrics: {}", path.display())?;
    if metrics.diverged {
        let step = metrics.records.last().map_or(0, |r| r.step);
        return Err(CliError::Runtime(anyhow::anyhow!("training diverged after step {step}")));
    }
    writeln!(out, "final eval accuracy: {:.4}", metrics.final_acc())?;
    Ok(())
}

/// Pool of head 0 with random weights over a random `seq_len` context.
pub fn inspect(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let head = head_config(cfg)?;
    let mut rng = Rng::new(cfg.seed);
    let p = HeadParams::random(&head, &mut rng, 1.0 / (head.d as f64).sqrt())?;
    let ctx = LagContext::from_forward(&rng.normal_matrix(cfg.seq_len, head.d, 1.0))?;
    let x = ctx.newest()?.to_vec();
    let view = instantiate_pool(&x, &ctx, &p, &head)?;
    let weights = view.slot_weights(&head);
    writeln!(
        out,
        "label={} t={} rho={:.6e} pool_mass={} activated_mass={}",
        cfg.label,
        view.t,
        view.rho,
        tv_mass(&view, Measure::Pool),
        tv_mass(&view, Measure::Activated)
    )?;
    writeln!(out, "{:>5} {:>14} {:>5} {:>12} {:>12} {:>12}", "slot", "alpha", "gate", "|u|", "|v|", "weight")?;
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    for i in 0..view.t {
        writeln!(
            out,
            "{:>5} {:>14.6e} {:>5} {:>12.6e} {:>12.6e} {:>12.6e}",
            i,
            view.alpha[0][i],
            u8::from(view.gates[i]),
            norm(view.u.row(i)),
            norm(view.v.row(i)),
            weights[i]
        )?;
    }
    Ok(())
}

pub const BENCH_TS: [usize; 3] = [16, 64, 256];
pub const BENCH_MAX_CONSTANT: f64 = 8.0;

pub fn bench(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    cfg.validate()?;
    let mut head = to_config(&label_of(&cfg.label)?, cfg.d, cfg.n_head, cfg.r_s)?;
    head.eps = cfg.eps;
    let rows = bench_counts(&head, &BENCH_TS, cfg.seed, false)?;
    let zero = bench_counts(&head, &BENCH_TS, cfg.seed, true)?;
    writeln!(out, "label={} d={} n_head={} r_s={}", cfg.label, head.d, head.n_head, head.r_s)?;
    writeln!(out, "{:>5} {:>12} {:>8} {:>12} {:>10}", "t", "extra_muls", "C", "extra_state", "zero_A_B")?;
    for (r, z) in rows.iter().zip(&zero) {
        writeln!(out, "{:>5} {:>12} {:>8.4} {:>12} {:>10}", r.t, r.extra_muls, r.constant, r.extra_state, z.extra_muls)?;
    }
    let worst = rows.iter().map(|r| r.constant).fold(0.0, f64::max);
    writeln!(out, "max C = {worst:.4} (bound {BENCH_MAX_CONSTANT})")?;
    if worst > BENCH_MAX_CONSTANT {
        return Err(CliError::Invariant(format!("extra multiplies exceed {BENCH_MAX_CONSTANT}·t·r_s·n_head (C = {worst:.4})")));
    }
    Ok(())
}

pub fn parse(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let l = label_of(&cfg.label)?;
    let head = to_config(&l, cfg.d, cfg.n_head, cfg.r_s)?;
    let base = match l.base {
        Base::Softmax => "softmax",
        Base::ReluL2 => "relu_l2",
        Base::Glu => "hyperglu",
    };
    let on = |b: bool| u8::from(b);
    writeln!(out, "canonical={}", render_label(&l))?;
    writeln!(
        out,
        "base={base} rope={} conv={} gates={} tmix1={} tmix2={} lag_layout={} overparam={}",
        on(l.rope),
        on(l.conv),
        on(l.gates),
        on(l.tmix_1),
        on(l.tmix_2),
        on(l.offset),
        on(l.overparam)
    )?;
    writeln!(
        out,
        "d={} n_head={} d_qk={} d_vo={} r_s={} l_max={} params_per_layer={}",
        head.d,
        head.n_head,
        head.d_qk,
        head.d_vo,
        head.r_s,
        head.l_max,
        head.param_count()
    )?;
    Ok(())
}
