//! Run configuration: defaults, `key=value` config files and flag overrides.

use std::path::PathBuf;
use std::str::FromStr;

use hyperhead_core::verify::Poison;

use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub label: String,
    pub d: usize,
    pub n_head: usize,
    pub r_s: usize,
    pub seq_len: usize,
    /// Block height of the blocked training path.
    pub block: usize,
    pub seed: u64,
    pub eps: f64,
    pub task: String,
    pub steps: usize,
    pub out: PathBuf,
    pub filter: Option<String>,
    pub poison: Option<Poison>,
    /// Random instances per verify suite.
    pub trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            label: "G-cg-q-12o".into(),
            d: 64,
            n_head: 2,
            r_s: 16,
            seq_len: 64,
            block: 128,
            seed: 0,
            eps: 1e-12,
            task: "selective_copy".into(),
            steps: 500,
            out: PathBuf::from("."),
            filter: None,
            poison: None,
            trials: 20,
        }
    }
}

pub fn parse_poison(s: &str) -> CliResult<Poison> {
    match s {
        "skew" => Ok(Poison::Skew),
        _ => Err(CliError::Usage(format!("unknown poison mode '{s}' (expected 'skew')"))),
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value.parse().map_err(|_| CliError::Usage(format!("invalid value '{value}' for '{key}'")))
}

impl RunConfig {
    /// Sets one key. Keys are the long flag names; `_` and `-` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key.replace('_', "-").as_str() {
            "label" => self.label = value.to_string(),
            "d" => self.d = num(key, value)?,
            "n-head" => self.n_head = num(key, value)?,
            "r-s" => self.r_s = num(key, value)?,
            "seq-len" => self.seq_len = num(key, value)?,
            "block" => self.block = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "task" => self.task = value.to_string(),
            "steps" => self.steps = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "filter" => self.filter = Some(value.to_string()),
            "poison" => self.poison = Some(parse_poison(value)?),
            "trials" => self.trials = num(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a config file body: one `key=value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let positive = [("d", self.d), ("n-head", self.n_head), ("seq-len", self.seq_len), ("block", self.block)];
        for (name, v) in positive {
            if v == 0 {
                return Err(CliError::Usage(format!("--{name} must be positive")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(CliError::Usage("--eps must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nd = 32\nn_head=1 # trailing\n\nlabel=R-12!\npoison=skew\n").unwrap();
        assert_eq!((c.d, c.n_head, c.label.as_str()), (32, 1, "R-12!"));
        assert_eq!(c.poison, Some(Poison::Skew));
        assert_eq!(c.r_s, 16);
    }

    #[test]
    fn bad_lines_are_usage_errors() {
        let mut c = RunConfig::default();
        assert_eq!(c.apply_text("d 32").unwrap_err().code(), 2);
        assert_eq!(c.apply_text("width=3").unwrap_err().code(), 2);
        assert_eq!(c.apply_text("d=-1").unwrap_err().code(), 2);
        assert_eq!(c.apply_text("poison=flip").unwrap_err().code(), 2);
    }

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.n_head, c.r_s, c.block, c.eps), (2, 16, 128, 1e-12));
        assert!(c.validate().is_ok());
        assert!(RunConfig { block: 0, ..c }.validate().is_err());
    }
}
