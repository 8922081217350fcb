//! Suite configuration: versioned TOML, unknown keys rejected.

use serde::{Deserialize, Serialize};

use crate::dns::{Pattern, SimConfig};
use crate::error::{Error, Result};
use crate::linear_euler::InitialProfile;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Acceptance criteria (1 to 11) evaluated by `report`.
    #[serde(default)]
    pub criteria: Vec<u8>,
    pub coercivity: Option<CoercivityConfig>,
    pub linear_euler: Option<LinearEulerConfig>,
    pub resolvent: Option<ResolventConfig>,
    pub quasilinear: Option<QuasilinearConfig>,
    pub dns: Option<DnsConfig>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            criteria: Vec::new(),
            coercivity: None,
            linear_euler: None,
            resolvent: None,
            quasilinear: None,
            dns: None,
        }
    }
}

impl SuiteConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version = {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(bad) = self.criteria.iter().find(|c| !(1..=11).contains(*c)) {
            return Err(Error::Config(format!("criteria: {bad} is not an acceptance criterion (1 to 11)")));
        }
        if let Some(d) = &self.dns {
            d.sim.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoercivityConfig {
    pub k_set: Vec<f64>,
    pub s_grid: Vec<f64>,
    /// Sequence sweep covers `|n| ≤ n_max`.
    pub n_max: i64,
    /// Truncation of the coercive-matrix checks.
    pub matrix_n: usize,
    pub matrix_k: Vec<f64>,
    pub matrix_s: Vec<f64>,
}

impl Default for CoercivityConfig {
    fn default() -> Self {
        Self {
            k_set: crate::coercivity::default_k_set(),
            s_grid: crate::coercivity::default_s_grid(),
            n_max: 500,
            matrix_n: 128,
            matrix_k: vec![2.0, 4.0],
            matrix_s: vec![0.0, 0.2, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearEulerConfig {
    pub k: f64,
    pub ny: usize,
    pub t_end: f64,
    pub dt: f64,
    pub tol: f64,
    pub profile: InitialProfile,
    pub window: Option<(f64, f64)>,
}

impl Default for LinearEulerConfig {
    fn default() -> Self {
        Self { k: 2.0, ny: 512, t_end: 100.0, dt: 0.25, tol: 1e-10, profile: InitialProfile::Smooth, window: Some((10.0, 100.0)) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventConfig {
    pub alpha: f64,
    pub k_max: f64,
    pub lambda_range: (f64, f64),
    pub lambda_count: usize,
    pub eps_list: Vec<f64>,
    pub nu_list: Vec<f64>,
    pub n_max: usize,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            k_max: 20.0,
            lambda_range: (-1.5, 1.5),
            lambda_count: 31,
            eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
            nu_list: vec![1e-1, 1e-2, 1e-3],
            n_max: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuasilinearConfig {
    pub nu: f64,
    pub kappa: f64,
    pub ny: usize,
    pub dt: f64,
    /// End time; defaults to `ν^{-4/9}` plus two steps.
    pub t_end: Option<f64>,
    /// `ω₀ = amplitude · ν^{1/3} · (unit-H³ cos(αx)cos y)`.
    pub amplitude_multiplier: f64,
    /// Cosine coefficients of the shear `V = Σ a_m cos(my)`.
    pub shear_cosine_series: Vec<f64>,
    pub ode_tol: f64,
}

impl Default for QuasilinearConfig {
    fn default() -> Self {
        Self {
            nu: 1e-3,
            kappa: 0.5,
            ny: 256,
            dt: 0.05,
            t_end: None,
            amplitude_multiplier: 0.1,
            shear_cosine_series: vec![0.0, 1.0],
            ode_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DnsConfig {
    pub sim: SimConfig,
    pub scan: Option<ScanConfig>,
}

impl Default for DnsConfig {
    fn default() -> Self {
        Self { sim: SimConfig::default(), scan: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub nu_list: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub pattern: Pattern,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let c = SuiteConfig::from_toml_str("schema_version = 1\n").unwrap();
        assert!(c.criteria.is_empty() && c.coercivity.is_none());
    }

    #[test]
    fn sections_take_defaults() {
        let c = SuiteConfig::from_toml_str("schema_version = 1\n[coercivity]\nn_max = 50\n[dns.sim]\nnx = 64\nny = 64\n").unwrap();
        assert_eq!(c.coercivity.unwrap().n_max, 50);
        let d = c.dns.unwrap();
        assert_eq!((d.sim.nx, d.sim.nu), (64, 2e-3));
    }

    #[test]
    fn unknown_key_is_named() {
        let e = SuiteConfig::from_toml_str("schema_version = 1\n[coercivity]\nnmax = 50\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("nmax"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn schema_version_checked() {
        assert!(SuiteConfig::from_toml_str("schema_version = 2\n").is_err());
        assert!(SuiteConfig::from_toml_str("seed = 1\n").is_err());
        assert!(SuiteConfig::from_toml_str("schema_version = 1\ncriteria = [12]\n").is_err());
    }

    #[test]
    fn dns_section_validated() {
        let e = SuiteConfig::from_toml_str("schema_version = 1\n[dns.sim]\ncfl = 0.9\n").unwrap_err();
        assert!(e.to_string().contains("cfl"));
    }
}
