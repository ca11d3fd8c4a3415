use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, Objective};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::EnvSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RsConfig {
    pub population: usize,
    pub horizon: usize,
}

impl Default for RsConfig {
    fn default() -> Self {
        Self {
            population: 1000,
            horizon: 30,
        }
    }
}

impl RsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.horizon == 0 {
            return Err(Error::Config("planner.rs population and horizon must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsPlan {
    pub actions: Vec<Vec<f64>>,
    pub best_return: f64,
    pub best_index: usize,
    pub returns: Vec<f64>,
}

/// Uniform random action sequences within the action bounds.
pub(crate) fn uniform_sequences(spec: &EnvSpec, n: usize, horizon: usize, stream: &RngStream) -> Vec<Vec<Vec<f64>>> {
    let mut rng = stream.rng();
    (0..n)
        .map(|_| {
            (0..horizon)
                .map(|_| {
                    spec.action_low
                        .iter()
                        .zip(&spec.action_high)
                        .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Random shooting: score `population` uniform sequences and keep the best.
pub fn plan_rs(objective: &Objective, s0: &[f64], cfg: &RsConfig, stream: &RngStream) -> Result<RsPlan> {
    cfg.validate()?;
    let spec = objective.env().spec();
    let candidates = uniform_sequences(spec, cfg.population, cfg.horizon, &stream.split_named("sample"));
    let returns = objective.evaluate_batch(s0, &candidates, &stream.split_named("eval"))?;
    let best_index = argmax(&returns);
    Ok(RsPlan {
        actions: candidates[best_index].clone(),
        best_return: returns[best_index],
        best_index,
        returns,
    })
}
