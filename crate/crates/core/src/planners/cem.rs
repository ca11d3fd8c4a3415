use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;
use crate::types::EnvSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CemConfig {
    pub population: usize,
    pub elite: usize,
    pub iterations: usize,
    /// Weight of the new elite statistics in the smoothed update
    /// `mean <- (1 - alpha) * mean + alpha * elite_mean` (same for variance).
    pub alpha: f64,
    /// Initial std as a fraction of each action range.
    pub init_std_scale: f64,
    pub horizon: usize,
    /// Floor on the sampling std.
    pub min_std: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 500,
            elite: 50,
            iterations: 5,
            alpha: 0.9,
            init_std_scale: 0.25,
            horizon: 30,
            min_std: 1e-6,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.horizon == 0 || self.iterations == 0 {
            return Err(Error::Config("planner.cem population, horizon and iterations must be >= 1".into()));
        }
        if self.elite == 0 || self.elite > self.population {
            return Err(Error::Config(format!(
                "planner.cem elite must be in 1..={}, got {}",
                self.population, self.elite
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("planner.cem alpha must be in [0, 1], got {}", self.alpha)));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let bad_std = !(self.init_std_scale > 0.0) || !(self.min_std >= 0.0);
        if bad_std {
            return Err(Error::Config("planner.cem std settings must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemPlan {
    /// Final sampling mean; this is the plan the controller executes.
    pub mean: Vec<Vec<f64>>,
    /// Best candidate seen in any iteration.
    pub incumbent: Vec<Vec<f64>>,
    pub incumbent_return: f64,
    /// Incumbent return after each iteration.
    pub incumbent_history: Vec<f64>,
}

/// Cross-entropy method over action sequences, started from `warm_start`
/// (or zeros) with std `init_std_scale * (high - low)`.
pub fn plan_cem(objective: &Objective, s0: &[f64], cfg: &CemConfig, warm_start: Option<&[Vec<f64>]>, stream: &RngStream) -> Result<CemPlan> {
    cfg.validate()?;
    let spec = objective.env().spec();
    let ad = spec.act_dim;
    let h = cfg.horizon;
    let mut mean: Vec<f64> = vec![0.0; h * ad];
    if let Some(w) = warm_start {
        for (t, a) in w.iter().take(h).enumerate() {
            check_dim("warm start action", ad, a.len())?;
            mean[t * ad..(t + 1) * ad].copy_from_slice(a);
        }
    }
    for t in 0..h {
        spec.clamp_in_place(&mut mean[t * ad..(t + 1) * ad]);
    }
    let mut var: Vec<f64> = (0..h * ad)
        .map(|i| {
            let d = i % ad;
            let sd = cfg.init_std_scale * (spec.action_high[d] - spec.action_low[d]);
            sd * sd
        })
        .collect();

    let mut incumbent = unflatten(&mean, ad);
    let mut incumbent_return = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let it_stream = stream.split(it as u64);
        let flat = sample_population(spec, &mean, &var, cfg, &it_stream.split_named("sample"));
        let candidates: Vec<Vec<Vec<f64>>> = flat.iter().map(|f| unflatten(f, ad)).collect();
        let returns = objective.evaluate_batch(s0, &candidates, &it_stream.split_named("eval"))?;

        let mut order: Vec<usize> = (0..cfg.population).collect();
        order.sort_by(|&a, &b| returns[b].total_cmp(&returns[a]).then(a.cmp(&b)));
        let elites = &order[..cfg.elite];
        if returns[order[0]] > incumbent_return {
            incumbent_return = returns[order[0]];
            incumbent = candidates[order[0]].clone();
        }
        history.push(incumbent_return);

        let n = elites.len() as f64;
        for i in 0..h * ad {
            let m = elites.iter().map(|&e| flat[e][i]).sum::<f64>() / n;
            let v = elites.iter().map(|&e| (flat[e][i] - m).powi(2)).sum::<f64>() / n;
            mean[i] = (1.0 - cfg.alpha) * mean[i] + cfg.alpha * m;
            var[i] = (1.0 - cfg.alpha) * var[i] + cfg.alpha * v;
        }
    }
    Ok(CemPlan {
        mean: unflatten(&mean, ad),
        incumbent,
        incumbent_return,
        incumbent_history: history,
    })
}

/// Flattened `(horizon * act_dim)` samples from the truncated diagonal
/// Gaussian, clamped to the action bounds.
fn sample_population(spec: &EnvSpec, mean: &[f64], var: &[f64], cfg: &CemConfig, stream: &RngStream) -> Vec<Vec<f64>> {
    let ad = spec.act_dim;
    let mut rng = stream.rng();
    (0..cfg.population)
        .map(|_| {
            (0..mean.len())
                .map(|i| {
                    let d = i % ad;
                    let sd = var[i].sqrt().max(cfg.min_std);
                    let z = truncated_normal(&mut rng);
                    (mean[i] + sd * z).clamp(spec.action_low[d], spec.action_high[d])
                })
                .collect()
        })
        .collect()
}

/// Standard normal draw restricted to [-2, 2] by rejection.
fn truncated_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z;
        }
    }
}

fn unflatten(flat: &[f64], ad: usize) -> Vec<Vec<f64>> {
    flat.chunks(ad).map(|c| c.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;
    use crate::planners::RolloutBackend;

    #[test]
    fn full_elite_single_iteration_returns_sample_mean() {
        let env = make_env("pendulum").unwrap();
        let spec = env.spec().clone();
        let obj = Objective::new(RolloutBackend::GroundTruth(env.into()));
        let cfg = CemConfig {
            population: 30,
            elite: 30,
            iterations: 1,
            alpha: 1.0,
            horizon: 4,
            ..CemConfig::default()
        };
        let stream = RngStream::root(5);
        let plan = plan_cem(&obj, &[1.0, 0.0, 0.0], &cfg, None, &stream).unwrap();
        let sd = 0.25 * (spec.action_high[0] - spec.action_low[0]);
        let samples = sample_population(&spec, &[0.0; 4], &[sd * sd; 4], &cfg, &stream.split(0).split_named("sample"));
        for t in 0..4 {
            let m = samples.iter().map(|s| s[t]).sum::<f64>() / 30.0;
            assert!((plan.mean[t][0] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_respect_bounds_and_truncation() {
        let env = make_env("cartpole").unwrap();
        let spec = env.spec().clone();
        let cfg = CemConfig {
            population: 500,
            horizon: 1,
            ..CemConfig::default()
        };
        let samples = sample_population(&spec, &[0.9], &[0.04], &cfg, &RngStream::root(6));
        for s in &samples {
            assert!(s[0] <= spec.action_high[0] && s[0] >= 0.9 - 2.0 * 0.2 - 1e-12);
        }
        assert!(samples.iter().any(|s| s[0] == spec.action_high[0]));
    }
}
