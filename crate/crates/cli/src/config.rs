//! JSON run configuration.
//!
//! ```json
//! {
//!   "grid": { "nu": 500, "kappa": 0.1, "r": 10 },
//!   "prior": { "mean": [-6, 0.02], "variance": [1, 0.0004], "rho": 0.92, "c0": 0 },
//!   "method": "log-mode",
//!   "seed": 7,
//!   "mcmc": { "chains": 2, "burn_in": 2000, "iterations": 10000 }
//! }
//! ```
//!
//! `grid` may instead be `{ "boundaries": [0, 50, 120] }`. Everything except
//! `grid` is optional; commands that need a prior report its absence.

use std::path::Path;

use blk_survival::oracle::McmcConfig;
use blk_survival::prior::StationarySpec;
use blk_survival::{GuideMethod, IntervalGrid};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub prior: Option<PriorConfig>,
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mcmc: Option<McmcSettings>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Log(LogGrid),
    Explicit(ExplicitGrid),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub nu: f64,
    pub kappa: f64,
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitGrid {
    pub boundaries: Vec<f64>,
}

/// Stationary prior with independent coefficients; `mean[0]` and
/// `variance[0]` belong to the baseline.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub rho: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSettings {
    pub chains: Option<usize>,
    pub burn_in: Option<usize>,
    pub iterations: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| {
            CliError::Input(format!(
                "invalid configuration ({e}); grid must be {{nu, kappa, r}} or {{boundaries}}"
            ))
        })
    }

    pub fn grid(&self) -> CliResult<IntervalGrid> {
        Ok(match &self.grid {
            GridConfig::Log(g) => IntervalGrid::log_grid(g.nu, g.kappa, g.r)?,
            GridConfig::Explicit(g) => IntervalGrid::new(g.boundaries.clone())?,
        })
    }

    pub fn prior(&self) -> CliResult<StationarySpec> {
        let p = self
            .prior
            .as_ref()
            .ok_or_else(|| CliError::Input("configuration has no `prior` section".into()))?;
        if p.variance.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(CliError::Input("prior variances must be positive".into()));
        }
        Ok(StationarySpec::diagonal(p.mean.clone(), p.variance.clone(), p.c0, p.rho)?)
    }

    /// Method from the command line if given, else from the file, else the
    /// default.
    pub fn method(&self, flag: Option<&str>) -> CliResult<GuideMethod> {
        match flag.or(self.method.as_deref()) {
            Some(name) => Ok(name.parse()?),
            None => Ok(GuideMethod::default()),
        }
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(1)
    }

    pub fn mcmc(&self, seed: u64) -> McmcConfig {
        let defaults = McmcConfig::default();
        let s = self.mcmc.clone().unwrap_or_default();
        McmcConfig {
            chains: s.chains.unwrap_or(defaults.chains),
            burn_in: s.burn_in.unwrap_or(defaults.burn_in),
            iterations: s.iterations.unwrap_or(defaults.iterations),
            seed,
            ..defaults
        }
    }
}
