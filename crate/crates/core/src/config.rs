//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::criticality::{find_pc, FreeEnergyOptions};
use crate::error::{Error, Result};
use crate::law::{pmf_from_law, InitialLaw, DEFAULT_K_CAP};
use crate::pmf::TiltedPmf;
use crate::scaling::ProfileNormalization;
use crate::trajectory::TruncationPolicy;

/// Initial law plus how to materialize it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(flatten)]
    pub law: InitialLaw,
    /// Replace `p` by the critical weight `p_c`.
    #[serde(default)]
    pub critical: bool,
    #[serde(default = "default_k_cap")]
    pub k_cap: usize,
    /// Accept laws with `P(X_0 >= 2) = 0`.
    #[serde(default)]
    pub allow_degenerate: bool,
}

fn default_k_cap() -> usize {
    DEFAULT_K_CAP
}

impl FamilySpec {
    /// The law with `p` resolved.
    pub fn resolve(&self) -> Result<InitialLaw> {
        self.law.validate()?;
        if self.critical {
            let pc = find_pc(&self.law, self.k_cap)?;
            Ok(self.law.with_p(pc.p_c))
        } else {
            Ok(self.law)
        }
    }

    pub fn pmf(&self) -> Result<TiltedPmf> {
        pmf_from_law(&self.resolve()?, self.k_cap, self.allow_degenerate)
    }
}

/// Per-experiment knobs. Unused fields are ignored by experiments that do
/// not need them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Scaling exponent; defaults to the family's `alpha`, or 4.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Mixture weights for free-energy scans.
    pub p_grid: Vec<f64>,
    /// Target `delta` values, converted to mixture weights when `p_grid` is empty.
    pub delta_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    /// Depths or generations at which to report.
    pub n_list: Vec<usize>,
    pub x: f64,
    pub eta: f64,
    pub h: f64,
    pub x_max: f64,
    /// Inclusive fit window in the fit's abscissa.
    pub fit_window: Option<(f64, f64)>,
    /// Number of parents.
    pub m: usize,
    pub moments: Vec<u32>,
    pub conditional_cap: usize,
    pub normalization: Option<ProfileNormalization>,
    /// Accepted trees for conditional sampling.
    pub count: usize,
    pub max_attempts: u64,
    pub free_energy: FreeEnergyOptions,
    /// Relative bracket width above which scan rows are flagged.
    pub flag_width: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: None,
            p_grid: vec![],
            delta_grid: vec![],
            lambda_grid: vec![],
            n_list: vec![],
            x: 1.0,
            eta: 1e-3,
            h: 1e-3,
            x_max: 5.0,
            fit_window: None,
            m: 2,
            moments: vec![1, 2, 3],
            conditional_cap: 10,
            normalization: None,
            count: 200,
            max_attempts: 10_000_000,
            free_energy: FreeEnergyOptions::default(),
            flag_width: 0.1,
        }
    }
}

/// A full run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    pub family: FamilySpec,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_reps")]
    pub reps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    /// Output directory; the command line may override it.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub options: Options,
}

fn default_n_max() -> usize {
    200
}

fn default_reps() -> u64 {
    10_000
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
experiment = "survival-decay"
n_max = 50
seed = 7

[family]
kind = "dirac-mixture"
a = 2
p = 0.5
critical = true

[truncation]
mode = "floor"
base_cap = 32

[options]
n_list = [10, 20]
free_energy = { n_max = 80 }
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = RunConfig::from_toml(TEXT).unwrap();
        assert_eq!(cfg.reps, 10_000);
        assert_eq!(cfg.options.free_energy.n_max, 80);
        assert_eq!(cfg.options.free_energy.rel_tol, 1e-3);
        assert!(matches!(cfg.truncation, TruncationPolicy::Floor { base_cap: 32, per_generation: 8, .. }));
        let law = cfg.family.resolve().unwrap();
        assert!((law.p() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn round_trips() {
        let cfg = RunConfig::from_toml(TEXT).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_toml(&TEXT.replace("n_list", "n_lsit")).is_err());
        assert!(RunConfig::from_toml(&TEXT.replace("dirac-mixture", "dirac")).is_err());
    }
}
