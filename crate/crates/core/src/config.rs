//! Experiment configuration files.
//!
//! A config is a TOML document with the sections `[experiment]`, `[noise]`,
//! `[termination]`, `[planner.rs]`, `[planner.cem]`, `[planner.ilqg]`,
//! `[dynamics]` and `[env]` (numeric constant overrides). Unknown keys are
//! rejected. Only `[experiment]` with `env` and `algo` is required.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{DynamicsConfig, ModelKind, PropagationKind};
use crate::envs::make_env_with;
use crate::error::{Error, Result};
use crate::planners::{CemConfig, IlqgConfig, RsConfig, TerminationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Random shooting over a learned deterministic model.
    Rs,
    /// Random shooting over a probabilistic ensemble.
    PetsRs,
    /// CEM over a probabilistic ensemble.
    PetsCem,
    /// Random shooting over the true dynamics.
    GtRs,
    /// CEM over the true dynamics.
    GtCem,
    /// iLQG over the true dynamics.
    Ilqg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Rs,
        Algorithm::PetsRs,
        Algorithm::PetsCem,
        Algorithm::GtRs,
        Algorithm::GtCem,
        Algorithm::Ilqg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rs => "rs",
            Algorithm::PetsRs => "pets_rs",
            Algorithm::PetsCem => "pets_cem",
            Algorithm::GtRs => "gt_rs",
            Algorithm::GtCem => "gt_cem",
            Algorithm::Ilqg => "ilqg",
        }
    }

    /// Whether the algorithm plans through a learned model.
    pub fn learns_dynamics(self) -> bool {
        matches!(self, Algorithm::Rs | Algorithm::PetsRs | Algorithm::PetsCem)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase().replace('-', "_");
        Algorithm::ALL.into_iter().find(|a| a.name() == lower).ok_or_else(|| {
            let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
            Error::Config(format!("unknown algorithm '{s}' (expected one of: {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub env: String,
    pub algo: Algorithm,
    #[serde(default = "default_total")]
    pub total_timesteps: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Random-action episodes collected before the first model fit.
    #[serde(default = "default_warmup")]
    pub warmup_episodes: usize,
    /// Minimum new timesteps between model refits; refits happen at episode
    /// boundaries. 0 refits after every episode.
    #[serde(default)]
    pub retrain_every: usize,
    /// Final-score window in timesteps.
    #[serde(default = "default_window")]
    pub final_window: u64,
    /// Learning-curve smoothing window in episodes.
    #[serde(default = "default_curve_window")]
    pub curve_window: usize,
    /// Worker threads; 0 uses every available core. Never affects results.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_total() -> usize {
    20_000
}
fn default_seeds() -> usize {
    4
}
fn default_warmup() -> usize {
    1
}
fn default_window() -> u64 {
    5000
}
fn default_curve_window() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sigma_o: f64,
    pub sigma_a: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub rs: RsConfig,
    pub cem: CemConfig,
    pub ilqg: IlqgConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub termination: TerminationConfig,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub env: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    /// A config with every section at its default.
    pub fn new(env: &str, algo: Algorithm) -> Self {
        Self {
            experiment: ExperimentSection {
                env: env.to_string(),
                algo,
                total_timesteps: default_total(),
                seeds: default_seeds(),
                master_seed: 0,
                warmup_episodes: default_warmup(),
                retrain_every: 0,
                final_window: default_window(),
                curve_window: default_curve_window(),
                workers: 0,
                out: None,
            },
            noise: NoiseConfig::default(),
            termination: TerminationConfig::default(),
            planner: PlannerSection::default(),
            dynamics: DynamicsConfig::default(),
            env: BTreeMap::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let x = &self.experiment;
        let env = make_env_with(&x.env, &self.env)?;
        let horizon = env.spec().horizon;
        if x.total_timesteps < horizon {
            return Err(Error::Config(format!(
                "total_timesteps {} is shorter than one {} episode ({horizon})",
                x.total_timesteps, x.env
            )));
        }
        if x.seeds == 0 {
            return Err(Error::Config("seeds must be >= 1".into()));
        }
        if x.final_window == 0 || x.curve_window == 0 {
            return Err(Error::Config("windows must be >= 1".into()));
        }
        if !(self.noise.sigma_o >= 0.0 && self.noise.sigma_a >= 0.0) {
            return Err(Error::Config("noise sigmas must be >= 0".into()));
        }
        self.termination.scheme()?;
        match x.algo {
            Algorithm::Rs | Algorithm::PetsRs | Algorithm::GtRs => self.planner.rs.validate()?,
            Algorithm::PetsCem | Algorithm::GtCem => self.planner.cem.validate()?,
            Algorithm::Ilqg => self.planner.ilqg.validate()?,
        }
        if x.algo.learns_dynamics() {
            self.effective_dynamics().validate()?;
        }
        Ok(())
    }

    /// Dynamics settings with the model kind implied by the algorithm:
    /// `rs` uses a deterministic model with mean propagation, the PETS
    /// variants a probabilistic ensemble.
    pub fn effective_dynamics(&self) -> DynamicsConfig {
        let mut d = self.dynamics.clone();
        match self.experiment.algo {
            Algorithm::Rs => {
                d.kind = ModelKind::Deterministic;
                d.propagation = PropagationKind::E;
            }
            Algorithm::PetsRs | Algorithm::PetsCem => d.kind = ModelKind::Probabilistic,
            _ => {}
        }
        d
    }

    /// Planning horizon of the algorithm's planner.
    pub fn planning_horizon(&self) -> usize {
        match self.experiment.algo {
            Algorithm::Rs | Algorithm::PetsRs | Algorithm::GtRs => self.planner.rs.horizon,
            Algorithm::PetsCem | Algorithm::GtCem => self.planner.cem.horizon,
            Algorithm::Ilqg => self.planner.ilqg.horizon,
        }
    }

    pub fn set_planning_horizon(&mut self, horizon: usize) {
        match self.experiment.algo {
            Algorithm::Rs | Algorithm::PetsRs | Algorithm::GtRs => self.planner.rs.horizon = horizon,
            Algorithm::PetsCem | Algorithm::GtCem => self.planner.cem.horizon = horizon,
            Algorithm::Ilqg => self.planner.ilqg.horizon = horizon,
        }
    }

    /// Hex sha256 of the canonical TOML rendering, ignoring `out` and
    /// `workers`.
    pub fn fingerprint(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.experiment.out = None;
        canon.experiment.workers = 0;
        let text = canon.to_toml_string()?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Sets one value addressed by a dotted path such as
    /// `planner.cem.elite`, re-validating the whole config.
    pub fn with_override(&self, path: &str, value: toml::Value) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let keys: Vec<&str> = path.split('.').collect();
        let (last, parents) = keys
            .split_last()
            .filter(|(l, _)| !l.is_empty())
            .ok_or_else(|| Error::Config(format!("empty override key '{path}'")))?;
        let mut node = &mut root;
        for k in parents {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("'{path}': '{k}' is not a section")))?;
            node = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        node.as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{path}' does not name a key in a section")))?
            .insert(last.to_string(), value);
        let cfg: Self = root.try_into().map_err(|e: toml::de::Error| Error::Config(format!("override '{path}': {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Hyperparameter grid: dotted config paths mapped to candidate values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridSpec {
    pub axes: BTreeMap<String, Vec<toml::Value>>,
}

impl GridSpec {
    /// Parses a TOML document whose top-level keys are quoted dotted paths
    /// with array values, e.g. `"planner.cem.elite" = [50, 100, 150]`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut axes = BTreeMap::new();
        for (k, v) in table {
            match v {
                toml::Value::Array(values) if !values.is_empty() => {
                    axes.insert(k, values);
                }
                _ => return Err(Error::Config(format!("grid key '{k}' must map to a non-empty array"))),
            }
        }
        if axes.is_empty() {
            return Err(Error::Config("grid is empty".into()));
        }
        Ok(Self { axes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Cartesian product in lexicographic key order; the last key varies
    /// fastest.
    pub fn cells(&self) -> Vec<Vec<(String, toml::Value)>> {
        let mut cells: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
        for (k, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|cell| {
                    values.iter().map(move |v| {
                        let mut c = cell.clone();
                        c.push((k.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}
