use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{sweep_grid, InstrKind, Topology};

use super::SweepOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad config: {0}")]
    Invalid(String),
}

/// Relative per-instruction energy of each category. The defaults are
/// placeholders that only fix an ordering (Exec most expensive, Nop
/// cheapest); they are not calibrated to any process node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWeights {
    pub exec: f64,
    pub copy: f64,
    pub load: f64,
    pub store: f64,
    pub nop: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights { exec: 1.0, copy: 0.35, load: 0.6, store: 0.6, nop: 0.05 }
    }
}

/// Placeholder weights file, mirrors [`EnergyWeights::default`].
pub const DEFAULT_WEIGHTS_TOML: &str = "\
# ---------------------------------------------------------------------
#  PLACEHOLDER ENERGY WEIGHTS - NOT MEASURED 28nm (OR ANY) SILICON DATA
#  Relative cost per instruction category, used only to rank design
#  points by an energy/EDP proxy. Replace with calibrated numbers.
# ---------------------------------------------------------------------
exec = 1.0
copy = 0.35
load = 0.6
store = 0.6
nop = 0.05
";

impl EnergyWeights {
    pub fn zero() -> Self {
        Self::uniform(0.0)
    }

    pub fn uniform(w: f64) -> Self {
        EnergyWeights { exec: w, copy: w, load: w, store: w, nop: w }
    }

    pub fn get(&self, k: InstrKind) -> f64 {
        match k {
            InstrKind::Exec => self.exec,
            InstrKind::Copy => self.copy,
            InstrKind::Load => self.load,
            InstrKind::Store => self.store,
            InstrKind::Nop => self.nop,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let w: EnergyWeights = toml::from_str(text)?;
        if InstrKind::ALL.iter().any(|&k| !(w.get(k).is_finite() && w.get(k) >= 0.0)) {
            return Err(ConfigError::Invalid("energy weights must be finite and non-negative".into()));
        }
        Ok(w)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&read(path)?)
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

/// Sweep description as read from TOML. Either `grid` (explicit
/// triples) or the `ds`/`bs`/`rs` axes may be given; with neither, the
/// standard 48-point grid is used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: Option<Vec<[usize; 3]>>,
    pub ds: Option<Vec<usize>>,
    pub bs: Option<Vec<usize>>,
    pub rs: Option<Vec<usize>>,
    pub topology: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub lambda: Option<f64>,
    pub window: Option<usize>,
    pub parallel: Option<bool>,
    /// Path of an energy-weights TOML file.
    pub weights_file: Option<String>,
    pub weights: Option<EnergyWeights>,
    /// Workload files; empty means the synthetic suite.
    #[serde(default)]
    pub workloads: Vec<String>,
    /// Size multiplier for the synthetic suite.
    pub scale: Option<f64>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&read(path)?)
    }

    pub fn grid(&self) -> Result<Vec<(usize, usize, usize)>, ConfigError> {
        if let Some(g) = &self.grid {
            if self.ds.is_some() || self.bs.is_some() || self.rs.is_some() {
                return Err(ConfigError::Invalid("give either `grid` or `ds`/`bs`/`rs`, not both".into()));
            }
            return Ok(g.iter().map(|&[d, b, r]| (d, b, r)).collect());
        }
        if self.ds.is_none() && self.bs.is_none() && self.rs.is_none() {
            return Ok(sweep_grid());
        }
        let ds = self.ds.clone().unwrap_or_else(|| vec![1, 2, 3]);
        let bs = self.bs.clone().unwrap_or_else(|| vec![8, 16, 32, 64]);
        let rs = self.rs.clone().unwrap_or_else(|| vec![16, 32, 64, 128]);
        let mut g = Vec::new();
        for &d in &ds {
            for &b in &bs {
                for &r in &rs {
                    g.push((d, b, r));
                }
            }
        }
        Ok(g)
    }

    /// Sweep options; `weights_file` is resolved relative to `base`.
    pub fn options(&self, base: Option<&Path>) -> Result<SweepOptions, ConfigError> {
        let mut o = SweepOptions::default();
        if let Some(t) = &self.topology {
            o.topology = t.parse::<Topology>().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if let Some(s) = &self.seeds {
            if s.is_empty() {
                return Err(ConfigError::Invalid("`seeds` is empty".into()));
            }
            o.seeds = s.clone();
        }
        if let Some(l) = self.lambda {
            o.lambda = l;
        }
        if let Some(w) = self.window {
            o.window = w;
        }
        if let Some(p) = self.parallel {
            o.parallel = p;
        }
        match (&self.weights, &self.weights_file) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("give either `weights` or `weights_file`".into())),
            (Some(w), None) => o.weights = *w,
            (None, Some(f)) => {
                let p = base.map_or_else(|| Path::new(f).to_path_buf(), |b| b.join(f));
                o.weights = EnergyWeights::load(&p)?;
            }
            (None, None) => {}
        }
        Ok(o)
    }
}
