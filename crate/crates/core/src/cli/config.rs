use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Budget, ScaleParams};
use crate::error::{Error, Result};
use crate::estimators::TailMode;
use crate::solver::{Coefficient, Preset};

/// Environment variable overriding `budget.max_cells`.
pub const MAX_CELLS_ENV: &str = "CHUNG_LAB_MAX_CELLS";

/// One campaign file. Every section except `campaign`, `grid` and `budget`
/// is only needed by the subcommand that reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default)]
    pub campaign: CampaignSection,
    pub coefficient: Option<CoefficientSpec>,
    pub scales: Option<ScaleParams>,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub budget: BudgetSection,
    pub smallball: Option<SmallBallSection>,
    pub couple: Option<CoupleSection>,
    pub chung_scan: Option<ChungScanSection>,
    pub bm_oracle: Option<BmOracleSection>,
    pub kernel_check: Option<KernelCheckSection>,
    pub tailfit: Option<TailfitSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub id: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Not part of the configuration hash.
    pub output_dir: Option<PathBuf>,
}

/// A coefficient preset with its declared Lipschitz constant and `sigma(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(flatten)]
    pub preset: Preset,
    pub lipschitz: f64,
    pub sigma0: f64,
}

impl CoefficientSpec {
    /// Build the coefficient and spot-check the declarations.
    pub fn build(&self) -> Result<Coefficient> {
        let coef = Coefficient::from_preset(self.preset);
        if (coef.sigma0() - self.sigma0).abs() > 1e-12 * (1.0 + self.sigma0.abs()) {
            return Err(Error::Config(format!(
                "{}: declared sigma0 = {} but sigma(0) = {}",
                coef.tag(),
                self.sigma0,
                coef.sigma0()
            )));
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::Config(format!(
                "declared Lipschitz constant {} must be finite and >= 0",
                self.lipschitz
            )));
        }
        let coef = coef.with_lipschitz(self.lipschitz);
        coef.spot_check(2000, 10.0)?;
        Ok(coef)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPolicy {
    #[serde(default = "default_ppa")]
    pub points_per_axis: usize,
    /// Points per axis for multi-resolution runs; defaults to
    /// `[points_per_axis, 2 * points_per_axis]`.
    pub resolutions: Option<Vec<usize>>,
}

fn default_ppa() -> usize {
    16
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            points_per_axis: default_ppa(),
            resolutions: None,
        }
    }
}

impl GridPolicy {
    pub fn resolutions(&self) -> Vec<usize> {
        self.resolutions
            .clone()
            .unwrap_or_else(|| vec![self.points_per_axis, 2 * self.points_per_axis])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub max_cells: Option<u64>,
    pub max_materialized: Option<u64>,
    /// Stop between work units once this much wall time has passed.
    pub max_wall_seconds: Option<f64>,
}

impl BudgetSection {
    pub fn budget(&self) -> Budget {
        let d = Budget::default();
        Budget {
            max_cells: self.max_cells.unwrap_or(d.max_cells),
            max_materialized: self.max_materialized.unwrap_or(d.max_materialized),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallSection {
    pub r: f64,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<TailMode>,
    pub trials: u64,
    #[serde(default = "default_smallball_shard")]
    pub shard_size: u64,
    #[serde(default = "yes")]
    pub fit: bool,
}

fn default_lambdas() -> Vec<f64> {
    (1..=8).map(|i| 0.5 * i as f64).collect()
}

fn default_modes() -> Vec<TailMode> {
    vec![TailMode::Exceedance]
}

fn default_smallball_shard() -> u64 {
    1000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSection {
    pub replicates: u64,
    #[serde(default = "default_couple_shard")]
    pub shard_size: u64,
    #[serde(default = "default_divergence_tol")]
    pub divergence_tol: f64,
}

fn default_couple_shard() -> u64 {
    100
}

fn default_divergence_tol() -> f64 {
    crate::coupling::DEFAULT_DIVERGENCE_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChungScanSection {
    pub replicates: u64,
    #[serde(default = "default_scan_shard")]
    pub shard_size: u64,
    #[serde(default)]
    pub zero_noise: bool,
}

fn default_scan_shard() -> u64 {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BmOracleSection {
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub monte_carlo: bool,
    #[serde(default = "default_bm_paths")]
    pub paths: u64,
    #[serde(default = "default_bm_steps")]
    pub steps: u64,
    #[serde(default = "default_bm_shard")]
    pub shard_size: u64,
}

fn default_bm_paths() -> u64 {
    100_000
}

fn default_bm_steps() -> u64 {
    10_000
}

fn default_bm_shard() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCheckSection {
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_kernel_tol")]
    pub tolerance: f64,
    #[serde(default = "default_cross_samples")]
    pub cross_samples: usize,
    #[serde(default = "default_cross_tol")]
    pub cross_tolerance: f64,
}

impl Default for KernelCheckSection {
    fn default() -> Self {
        Self {
            times: default_times(),
            probes: default_probes(),
            tolerance: default_kernel_tol(),
            cross_samples: default_cross_samples(),
            cross_tolerance: default_cross_tol(),
        }
    }
}

fn default_times() -> Vec<f64> {
    vec![1e-4, 1e-2, 1.0]
}

fn default_probes() -> usize {
    50
}

fn default_kernel_tol() -> f64 {
    1e-8
}

fn default_cross_samples() -> usize {
    100
}

fn default_cross_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailfitSection {
    /// A `smallball` CSV; relative paths are taken from the config file's directory.
    pub input: PathBuf,
}

impl CampaignConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a config file, resolving the tailfit input against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(tf) = cfg.tailfit.as_mut() {
            if tf.input.is_relative() {
                if let Some(dir) = path.parent() {
                    tf.input = dir.join(&tf.input);
                }
            }
        }
        Ok(cfg)
    }

    /// Apply `--seed` and the environment budget override.
    pub fn with_overrides(mut self, seed: Option<u64>, max_cells_env: Option<&str>) -> Result<Self> {
        if let Some(s) = seed {
            self.campaign.seed = s;
        }
        if let Some(v) = max_cells_env {
            let cells = v.trim().parse::<u64>().map_err(|_| {
                Error::Config(format!("{MAX_CELLS_ENV} must be an integer, got {v:?}"))
            })?;
            self.budget.max_cells = Some(cells);
        }
        Ok(self)
    }

    pub fn coefficient(&self) -> Result<Coefficient> {
        self.coefficient
            .as_ref()
            .ok_or_else(|| Error::Config("missing [coefficient] section".into()))?
            .build()
    }

    pub fn scales(&self) -> Result<ScaleParams> {
        let s = self
            .scales
            .ok_or_else(|| Error::Config("missing [scales] section".into()))?;
        crate::domain::scale_sequence(&s)?;
        Ok(s)
    }

    /// SHA-256 of the canonical JSON form. Fields that cannot change any
    /// result (output directory, shard sizes, wall-time cap) are left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.campaign.output_dir = None;
        canonical.budget.max_wall_seconds = None;
        if let Some(s) = canonical.smallball.as_mut() {
            s.shard_size = 0;
        }
        if let Some(s) = canonical.couple.as_mut() {
            s.shard_size = 0;
        }
        if let Some(s) = canonical.chung_scan.as_mut() {
            s.shard_size = 0;
        }
        if let Some(s) = canonical.bm_oracle.as_mut() {
            s.shard_size = 0;
        }
        let value = serde_json::to_value(&canonical).expect("config serialises");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub(crate) fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Error::Config(format!("missing [{name}] section")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[campaign]
seed = 7
output_dir = "out"

[coefficient]
kind = "affine"
c0 = 2.0
c1 = 1.0
lipschitz = 1.0
sigma0 = 2.0

[scales]
a = 2.0
n_min = 3
n_max = 6
epsilon = 0.5

[couple]
replicates = 10
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = CampaignConfig::parse(SAMPLE).unwrap();
        let sigma = cfg.coefficient().unwrap();
        assert_eq!(sigma.sigma0(), 2.0);
        assert_eq!(cfg.scales().unwrap().n_max, 6);
        assert_eq!(cfg.couple.as_ref().unwrap().shard_size, 100);
        assert_eq!(cfg.grid.resolutions(), vec![16, 32]);
    }

    #[test]
    fn hash_tracks_semantic_fields() {
        let a = CampaignConfig::parse(SAMPLE).unwrap();
        let mut b = a.clone();
        b.campaign.output_dir = Some("elsewhere".into());
        b.couple.as_mut().unwrap().shard_size = 3;
        assert_eq!(a.hash(), b.hash());
        let mut e = a.clone();
        e.couple.as_mut().unwrap().replicates = 11;
        assert_ne!(a.hash(), e.hash());
        let c = a.clone().with_overrides(Some(8), None).unwrap();
        assert_ne!(a.hash(), c.hash());
        let d = a.clone().with_overrides(None, Some("1000")).unwrap();
        assert_ne!(a.hash(), d.hash());
        assert!(a.clone().with_overrides(None, Some("lots")).is_err());
    }

    #[test]
    fn declarations_are_checked() {
        let wrong_lipschitz = SAMPLE.replace("lipschitz = 1.0", "lipschitz = 0.5");
        assert!(CampaignConfig::parse(&wrong_lipschitz).unwrap().coefficient().is_err());
        let wrong_sigma0 = SAMPLE.replace("sigma0 = 2.0", "sigma0 = 1.0");
        assert!(CampaignConfig::parse(&wrong_sigma0).unwrap().coefficient().is_err());
        let unknown = SAMPLE.replace("[couple]", "[couple]\nbogus = 1");
        assert!(CampaignConfig::parse(&unknown).is_err());
    }
}
