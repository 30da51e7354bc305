//! Run configuration: defaults, then command-line flags, then an optional
//! TOML file whose keys override both.
//!
//! Recognized keys (all optional):
//!
//! ```toml
//! seed = 0
//! out_dir = "results"
//!
//! # simulation
//! k = 4
//! n = 500
//! gamma = [20.0]          # one value is broadcast over components
//! eta = [0.01]
//! sigma2 = [0.04]
//! irregular_sites = true
//! offset = 0.5
//! k_star = 1
//! holdout_fraction = 0.5
//!
//! # fitting
//! nu = 2.5
//! center = true
//! threads = 4
//! [prior]
//! a = 0.5
//! b = 1.0
//! c = 0.01                # default: site span / number of sites
//! [optimizer]
//! zeta_starts = [0.1, 1.0, 10.0]
//! eta_starts = [1e-4, 1e-2, 1.0]
//! tolerance = 1e-8
//! max_iterations = 500
//! zeta_bounds = [1e-8, 1e4]
//! eta_bounds = [1e-12, 1e6]
//! variance = "posterior-mode"  # or "mle", "posterior-mean"
//!
//! # evaluation
//! level = 0.95
//! threshold = 0.5
//! flank = 2
//!
//! # benchmark
//! sizes = [1000, 2000, 4000]
//! dense_max = 4000
//! reps = 3
//! ```

use std::path::{Path, PathBuf};

use nonsep_gasp::estimate::{FitConfig, OptimizerConfig, PriorSpec};
use nonsep_gasp::simulate::SimulationConfig;
use nonsep_gasp::{KernelSpec, Roughness, SiteGrid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub k: usize,
    pub n: usize,
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub irregular_sites: bool,
    pub offset: f64,
    pub k_star: usize,
    pub holdout_fraction: f64,
    pub nu: f64,
    pub center: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub prior: PriorOverrides,
    pub optimizer: OptimizerConfig,
    pub level: f64,
    pub threshold: f64,
    pub flank: usize,
    pub sizes: Vec<usize>,
    pub dense_max: usize,
    pub reps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimulationConfig::default();
        Self {
            seed: sim.seed,
            out_dir: PathBuf::from("."),
            k: sim.k,
            n: sim.n,
            gamma: sim.gamma,
            eta: sim.eta,
            sigma2: sim.sigma2,
            irregular_sites: sim.irregular_sites,
            offset: sim.offset,
            k_star: sim.k_star,
            holdout_fraction: sim.holdout_fraction,
            nu: 2.5,
            center: true,
            threads: None,
            prior: PriorOverrides::default(),
            optimizer: OptimizerConfig::default(),
            level: 0.95,
            threshold: 0.5,
            flank: 2,
            sizes: vec![1000, 2000, 4000, 8000, 16000],
            dense_max: 4000,
            reps: 3,
        }
    }
}

/// Recursively overlays `top` onto `base`; tables merge, everything else is replaced.
fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (key, value) in t {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

impl RunConfig {
    /// Applies the keys of a TOML file on top of `self`.
    pub fn overlay_file(self, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Core(nonsep_gasp::GaspError::Io {
                path: path.to_path_buf(),
                source: e,
            })
        })?;
        let top: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let mut base = toml::Value::try_from(&self).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut base, top);
        base.try_into().map_err(|e: toml::de::Error| {
            CliError::Config(format!("{}: {}", path.display(), e.message()))
        })
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            k: self.k,
            n: self.n,
            gamma: self.gamma.clone(),
            eta: self.eta.clone(),
            sigma2: self.sigma2.clone(),
            irregular_sites: self.irregular_sites,
            offset: self.offset,
            k_star: self.k_star,
            holdout_fraction: self.holdout_fraction,
            seed: self.seed,
        }
    }

    /// Fitting options; only the Matérn-5/2 kernel has a state-space form here.
    pub fn fit_config(&self) -> Result<FitConfig, CliError> {
        let spec = KernelSpec::from_nu(self.nu, 1.0)?;
        if spec.roughness() != Roughness::FiveHalves {
            return Err(CliError::Config(format!(
                "fitting supports roughness 2.5 only, got {}",
                self.nu
            )));
        }
        Ok(FitConfig {
            optimizer: self.optimizer.clone(),
            center: self.center,
            threads: self.threads,
        })
    }

    pub fn prior_for(&self, grid: &SiteGrid) -> Result<PriorSpec, CliError> {
        let d = PriorSpec::for_grid(grid)?;
        Ok(PriorSpec::new(
            self.prior.a.unwrap_or(d.a),
            self.prior.b.unwrap_or(d.b),
            self.prior.c.unwrap_or(d.c),
        )?)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "holdout_fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Config(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}
