use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_poison, RunConfig};
use crate::{commands, CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "hyperhead", version, about = "Dynamic MLP attention heads: invariant suites, micro-training, inspection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Run the invariant suites and report the worst residual of each.
    Verify,
    /// Train the tiny model on a synthetic task and write a metrics CSV.
    Train,
    /// Print the instantiated memory pool of one head.
    Inspect,
    /// Count the extra multiplies of temporal mixing per decoding step.
    Bench,
    /// Parse a label and print its configuration.
    Parse,
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to the built-in defaults.
#[derive(Args, Debug, Default)]
pub struct Opts {
    /// Config file of `key=value` lines (`#` comments); keys mirror the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub label: Option<String>,
    #[arg(long, global = true)]
    pub d: Option<usize>,
    #[arg(long, global = true)]
    pub n_head: Option<usize>,
    #[arg(long, global = true)]
    pub r_s: Option<usize>,
    #[arg(long, global = true)]
    pub seq_len: Option<usize>,
    /// Block height of the blocked training path.
    #[arg(long, global = true)]
    pub block: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// selective_copy, incontext_recall, noisy_recall or compression.
    #[arg(long, global = true)]
    pub task: Option<String>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Output directory for metrics files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Only run verify suites whose `module.name` contains this text.
    #[arg(long, global = true)]
    pub filter: Option<String>,
    /// Fault injection for testing the harness (`skew`).
    #[arg(long, global = true)]
    pub poison: Option<String>,
    /// Random instances per verify suite.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
}

impl Opts {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = &self.$field { cfg.$field = v.clone(); } )* };
        }
        take!(label, d, n_head, r_s, seq_len, block, seed, eps, task, steps, out, trials);
        if let Some(f) = &self.filter {
            cfg.filter = Some(f.clone());
        }
        if let Some(p) = &self.poison {
            cfg.poison = Some(parse_poison(p)?);
        }
        Ok(cfg)
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let cfg = cli.opts.resolve()?;
    match cli.command {
        Command::Verify => commands::verify(&cfg, out),
        Command::Train => commands::train(&cfg, out),
        Command::Inspect => commands::inspect(&cfg, out),
        Command::Bench => commands::bench(&cfg, out),
        Command::Parse => commands::parse(&cfg, out),
    }
}

/// Process entry: parses `std::env::args`, runs, and returns the exit code.
pub fn main_code() -> u8 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("{e}");
            e.code()
        }
    }
}
