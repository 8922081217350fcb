//! Suite runner: module experiments plus acceptance criteria, reduced into one report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{SuiteConfig, SCHEMA_VERSION};
use super::criteria::{evaluate, CriterionOutcome};
use super::experiments::{self, run_in_dir};
use super::output::{config_digest, timestamp};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub name: String,
    /// Directory of the run, relative to the report.
    pub dir: PathBuf,
    pub config_digest: String,
    pub runtime_s: f64,
    pub summary: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub status: Verdict,
    pub config_digest: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub experiments: Vec<ExperimentRecord>,
    pub criteria: Vec<CriterionOutcome>,
    pub failed: Vec<u8>,
}

impl SuiteReport {
    /// `None` on success, otherwise a message naming every failed criterion.
    pub fn failure_message(&self) -> Option<String> {
        if self.failed.is_empty() {
            return None;
        }
        let names: Vec<String> = self
            .criteria
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("criterion {} ({}): {}", c.id, c.title, c.summary))
            .collect();
        Some(format!("{} failed: {}", names.len(), names.join("; ")))
    }
}

/// Set the suite seed and propagate it to the seeded experiments.
pub fn apply_seed(cfg: &mut SuiteConfig, seed: u64) {
    cfg.seed = seed;
    if let Some(d) = cfg.dns.as_mut() {
        d.sim.seed = seed;
    }
}

pub fn run_suite_file(config_path: &Path, out_dir: &Path) -> Result<SuiteReport> {
    run_suite(&SuiteConfig::load(config_path)?, out_dir)
}

/// Run every configured experiment into `out_dir/<name>` and evaluate the listed
/// criteria; writes `out_dir/report.json`.
pub fn run_suite(cfg: &SuiteConfig, out_dir: &Path) -> Result<SuiteReport> {
    cfg.validate()?;
    let started = timestamp();
    std::fs::create_dir_all(out_dir)?;
    let mut records = Vec::new();
    let mut record = |name: &str, r: (Value, super::output::ExperimentManifest)| {
        records.push(ExperimentRecord {
            name: name.to_string(),
            dir: PathBuf::from(name),
            config_digest: r.1.config_digest,
            runtime_s: r.1.runtime_s,
            summary: r.0,
        });
    };
    let seed = cfg.seed;
    if let Some(c) = &cfg.coercivity {
        record("coercivity", run_in_dir("coercivity", c, seed, &out_dir.join("coercivity"), |o| experiments::coercivity(c, o))?);
    }
    if let Some(c) = &cfg.linear_euler {
        record("linear-euler", run_in_dir("linear-euler", c, seed, &out_dir.join("linear-euler"), |o| experiments::linear_euler(c, o))?);
    }
    if let Some(c) = &cfg.resolvent {
        record("resolvent", run_in_dir("resolvent", c, seed, &out_dir.join("resolvent"), |o| experiments::resolvent(c, o))?);
    }
    if let Some(c) = &cfg.quasilinear {
        record("quasilinear", run_in_dir("quasilinear", c, seed, &out_dir.join("quasilinear"), |o| experiments::quasilinear(c, o))?);
    }
    if let Some(c) = &cfg.dns {
        record("dns", run_in_dir("dns", c, c.sim.seed, &out_dir.join("dns"), |o| experiments::dns(c, o))?);
    }
    let mut ids = cfg.criteria.clone();
    ids.sort_unstable();
    ids.dedup();
    let criteria: Vec<CriterionOutcome> = ids.iter().map(|&id| evaluate(id)).collect();
    let failed: Vec<u8> = criteria.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    let report = SuiteReport {
        schema_version: SCHEMA_VERSION,
        status: if failed.is_empty() { Verdict::Pass } else { Verdict::Fail },
        config_digest: config_digest(cfg)?,
        seed,
        started,
        finished: timestamp(),
        experiments: records,
        criteria,
        failed,
    };
    std::fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::CoercivityConfig;

    #[test]
    fn empty_suite_passes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SuiteConfig::from_toml_str("schema_version = 1\n").unwrap();
        let r = run_suite(&cfg, dir.path()).unwrap();
        assert_eq!(r.status, Verdict::Pass);
        assert!(r.criteria.is_empty() && r.experiments.is_empty());
        assert!(r.failure_message().is_none());
        assert!(dir.path().join("report.json").exists());
    }

    #[test]
    fn coercivity_only_suite_reports_slacks() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SuiteConfig {
            coercivity: Some(CoercivityConfig { n_max: 40, matrix_n: 16, ..CoercivityConfig::default() }),
            ..SuiteConfig::default()
        };
        let r = run_suite(&cfg, dir.path()).unwrap();
        let s = &r.experiments[0].summary;
        assert!(s["min_slack_b"].as_f64().unwrap() >= 0.0);
        assert!(s["min_slack_c"].as_f64().unwrap() >= 0.0);
        for f in ["coercivity.csv", "summary.json", "manifest.json"] {
            assert!(dir.path().join("coercivity").join(f).exists(), "{f}");
        }
    }

    #[test]
    fn failing_criterion_is_named() {
        let r = SuiteReport {
            schema_version: 1,
            status: Verdict::Fail,
            config_digest: String::new(),
            seed: 0,
            started: String::new(),
            finished: String::new(),
            experiments: vec![],
            criteria: vec![CriterionOutcome {
                id: 4,
                title: "x".into(),
                pass: false,
                summary: "bad".into(),
                metrics: Default::default(),
                info: vec![],
                runtime_s: 0.0,
            }],
            failed: vec![4],
        };
        assert!(r.failure_message().unwrap().contains("criterion 4"));
    }
}
