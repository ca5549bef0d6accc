//! Registry of invariant suites driven by `hyperhead verify`.

pub mod oracle;
mod suites;

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;

/// Test-only fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Poison {
    /// Redirects one entry of the offset-layout gather map.
    Skew,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random instances per suite.
    pub trials: usize,
    pub poison: Option<Poison>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 0, trials: 20, poison: None }
    }
}

/// Worst residual of one suite against its tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub residual: f64,
    pub tol: f64,
    /// Seed of the worst instance.
    pub seed: u64,
    pub detail: String,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.residual.is_finite() && self.residual <= self.tol
    }
}

/// Running maximum over trials, remembering the worst seed.
pub(crate) struct Worst {
    residual: f64,
    seed: u64,
    detail: String,
}

impl Worst {
    pub(crate) fn new(seed: u64) -> Self {
        Self { residual: 0.0, seed, detail: String::new() }
    }

    pub(crate) fn see(&mut self, residual: f64, seed: u64, detail: impl FnOnce() -> String) {
        let worse = if residual.is_nan() { !self.residual.is_nan() } else { residual > self.residual };
        if worse {
            self.residual = residual;
            self.seed = seed;
            self.detail = detail();
        }
    }

    pub(crate) fn finish(self, tol: f64) -> Outcome {
        Outcome { residual: self.residual, tol, seed: self.seed, detail: self.detail }
    }
}

pub struct Suite {
    pub module: &'static str,
    pub name: &'static str,
    pub run: fn(&VerifyConfig) -> Result<Outcome>,
}

impl Suite {
    /// `module.name`.
    pub fn id(&self) -> String {
        alloc::format!("{}.{}", self.module, self.name)
    }
}

pub static SUITES: &[Suite] = &[
    Suite { module: "dplr", name: "fast_dense_equivalence", run: suites::fast_dense },
    Suite { module: "dplr", name: "extension_consistency", run: suites::extension },
    Suite { module: "dplr", name: "operation_count", run: suites::op_count },
    Suite { module: "head", name: "gate_invariance", run: suites::gate_invariance },
    Suite { module: "head", name: "dynamic_mlp_equivalence", run: suites::dynamic_mlp },
    Suite { module: "head", name: "baseline_recovery", run: suites::baseline },
    Suite { module: "head", name: "hyperglu_decoupling", run: suites::decoupling },
    Suite { module: "head", name: "causality", run: suites::causality },
    Suite { module: "head", name: "incremental_decoding", run: suites::incremental },
    Suite { module: "memory", name: "readout_equivalence", run: suites::readout },
    Suite { module: "memory", name: "tv_contraction", run: suites::tv },
    Suite { module: "memory", name: "extension_truncation", run: suites::extension_truncation },
    Suite { module: "memory", name: "static_polyhedral", run: suites::polyhedral },
    Suite { module: "memory", name: "register_additivity", run: suites::registers },
    Suite { module: "blocked", name: "layout_bijectivity", run: suites::bijectivity },
    Suite { module: "blocked", name: "blocked_naive_equivalence", run: suites::equivalence },
    Suite { module: "blocked", name: "remask_idempotence", run: suites::remask },
];

/// Suites whose id contains `filter` (all when `None`).
pub fn select(filter: Option<&str>) -> Vec<&'static Suite> {
    SUITES.iter().filter(|s| filter.map_or(true, |f| s.id().contains(f))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_covers_every_invariant() {
        let expected = [
            "dplr.fast_dense_equivalence",
            "dplr.extension_consistency",
            "dplr.operation_count",
            "head.gate_invariance",
            "head.dynamic_mlp_equivalence",
            "head.baseline_recovery",
            "head.hyperglu_decoupling",
            "head.causality",
            "head.incremental_decoding",
            "memory.readout_equivalence",
            "memory.tv_contraction",
            "memory.extension_truncation",
            "memory.static_polyhedral",
            "memory.register_additivity",
            "blocked.layout_bijectivity",
            "blocked.blocked_naive_equivalence",
            "blocked.remask_idempotence",
        ];
        let ids: Vec<String> = SUITES.iter().map(Suite::id).collect();
        assert_eq!(ids, expected);
        assert_eq!(select(Some("dplr")).len(), 3);
    }

    #[test]
    fn every_suite_passes_by_default() {
        let cfg = VerifyConfig { trials: 4, ..VerifyConfig::default() };
        for s in SUITES {
            let out = (s.run)(&cfg).unwrap();
            assert!(out.passed(), "{}: {out:?}", s.id());
        }
    }

    #[test]
    fn skew_poison_breaks_bijectivity_only() {
        let cfg = VerifyConfig { trials: 4, poison: Some(Poison::Skew), ..VerifyConfig::default() };
        for s in SUITES {
            let out = (s.run)(&cfg).unwrap();
            assert_eq!(out.passed(), s.name != "layout_bijectivity", "{}", s.id());
        }
    }
}
