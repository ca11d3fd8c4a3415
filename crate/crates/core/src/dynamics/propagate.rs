use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Array3, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DynamicsEnsemble, ModelKind};
use crate::envs::Environment;
use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

/// How particles move through an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PropagationKind {
    /// One particle following the average of the member means.
    #[serde(rename = "e", alias = "E")]
    E,
    /// Each particle draws a fresh member at every step.
    #[serde(rename = "ts1", alias = "TS1")]
    TS1,
    /// Particle `p` stays with member `p mod K` for the whole rollout.
    #[serde(rename = "tsinf", alias = "TSinf", alias = "TSINF")]
    TSinf,
    /// Particles are replaced after every step by samples from a Gaussian
    /// matched to their mean and variance.
    #[serde(rename = "ds", alias = "DS")]
    DS,
}

impl PropagationKind {
    pub const ALL: [PropagationKind; 4] = [PropagationKind::E, PropagationKind::TS1, PropagationKind::TSinf, PropagationKind::DS];

    pub fn name(self) -> &'static str {
        match self {
            PropagationKind::E => "E",
            PropagationKind::TS1 => "TS1",
            PropagationKind::TSinf => "TSinf",
            PropagationKind::DS => "DS",
        }
    }
}

impl fmt::Display for PropagationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PropagationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e" => Ok(PropagationKind::E),
            "ts1" => Ok(PropagationKind::TS1),
            "tsinf" => Ok(PropagationKind::TSinf),
            "ds" => Ok(PropagationKind::DS),
            _ => Err(Error::Config(format!("unknown propagation mode '{s}' (expected E, TS1, TSinf or DS)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagationMode {
    pub kind: PropagationKind,
    pub particles: usize,
}

impl PropagationMode {
    pub fn new(kind: PropagationKind, particles: usize) -> Result<Self> {
        if particles == 0 {
            return Err(Error::Config("particles must be >= 1".into()));
        }
        if kind == PropagationKind::E && particles != 1 {
            return Err(Error::Config(format!("mode E uses exactly one particle, got {particles}")));
        }
        Ok(Self { kind, particles })
    }

    /// Like [`new`](Self::new) but silently uses one particle for mode E.
    pub fn from_setting(kind: PropagationKind, particles: usize) -> Result<Self> {
        let particles = if kind == PropagationKind::E { 1 } else { particles };
        Self::new(kind, particles)
    }

    /// Number of particles actually simulated.
    pub fn effective_particles(&self) -> usize {
        match self.kind {
            PropagationKind::E => 1,
            _ => self.particles,
        }
    }
}

/// Predicted states for one action sequence, shaped
/// `(particles, horizon + 1, obs_dim)`; index 0 along the time axis is the
/// start state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRollout {
    pub states: Array3<f64>,
}

impl ParticleRollout {
    pub fn particles(&self) -> usize {
        self.states.len_of(Axis(0))
    }

    pub fn horizon(&self) -> usize {
        self.states.len_of(Axis(1)) - 1
    }

    pub fn state(&self, particle: usize, t: usize) -> Vec<f64> {
        self.states.slice(s![particle, t, ..]).to_vec()
    }
}

/// Per-particle undiscounted return of `actions` along `rollout`, scored by
/// the environment's reward on each predicted transition.
pub fn particle_returns(rollout: &ParticleRollout, env: &dyn Environment, actions: &[Vec<f64>]) -> Vec<f64> {
    (0..rollout.particles())
        .map(|p| {
            (0..rollout.horizon())
                .map(|t| {
                    let s = rollout.states.slice(s![p, t, ..]);
                    let next = rollout.states.slice(s![p, t + 1, ..]);
                    env.reward_raw(s.as_slice().unwrap(), &actions[t], next.as_slice().unwrap())
                })
                .sum()
        })
        .collect()
}

/// Propagates one action sequence from `s0`.
pub fn propagate(ens: &DynamicsEnsemble, mode: PropagationMode, s0: &[f64], actions: &[Vec<f64>], stream: &RngStream) -> Result<ParticleRollout> {
    let mut out = propagate_batch(ens, mode, s0, &[actions], std::slice::from_ref(stream))?;
    Ok(out.pop().expect("one rollout"))
}

/// Propagates several action sequences of equal length together. Each
/// candidate draws from its own stream, so results do not depend on how
/// candidates are grouped into batches.
pub fn propagate_batch(ens: &DynamicsEnsemble, mode: PropagationMode, s0: &[f64], candidates: &[&[Vec<f64>]], streams: &[RngStream]) -> Result<Vec<ParticleRollout>> {
    let od = ens.obs_dim();
    let ad = ens.act_dim();
    check_dim("start state", od, s0.len())?;
    check_dim("candidate streams", candidates.len(), streams.len())?;
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let horizon = candidates[0].len();
    for c in candidates {
        check_dim("candidate horizon", horizon, c.len())?;
        for a in c.iter() {
            check_dim("action", ad, a.len())?;
        }
    }
    let n_cand = candidates.len();
    let p = mode.effective_particles();
    let rows = n_cand * p;
    let k = ens.len();
    let stochastic = ens.kind() == ModelKind::Probabilistic;
    let mut rngs: Vec<_> = streams.iter().map(|s| s.rng()).collect();

    let mut out: Vec<Array3<f64>> = (0..n_cand).map(|_| Array3::zeros((p, horizon + 1, od))).collect();
    let mut state = Array2::zeros((rows, od));
    for r in 0..rows {
        for d in 0..od {
            state[[r, d]] = s0[d];
        }
    }
    for o in out.iter_mut() {
        for pi in 0..p {
            for d in 0..od {
                o[[pi, 0, d]] = s0[d];
            }
        }
    }

    let mut actions = Array2::zeros((rows, ad));
    let mut assign = vec![0usize; rows];
    for t in 0..horizon {
        for (c, cand) in candidates.iter().enumerate() {
            for pi in 0..p {
                for d in 0..ad {
                    actions[[c * p + pi, d]] = cand[t][d];
                }
            }
        }
        let next = if mode.kind == PropagationKind::E {
            let mut acc = Array2::zeros((rows, od));
            for m in 0..k {
                let (mean, _) = ens.predict_batch(m, state.view(), actions.view());
                acc += &mean;
            }
            acc / k as f64
        } else {
            for c in 0..n_cand {
                for pi in 0..p {
                    assign[c * p + pi] = match mode.kind {
                        PropagationKind::TS1 if k > 1 => rngs[c].random_range(0..k),
                        _ => pi % k,
                    };
                }
            }
            let mut mean = Array2::zeros((rows, od));
            let mut var = Array2::zeros((rows, od));
            for m in 0..k {
                let idx: Vec<usize> = (0..rows).filter(|&r| assign[r] == m).collect();
                if idx.is_empty() {
                    continue;
                }
                let s = state.select(Axis(0), &idx);
                let a = actions.select(Axis(0), &idx);
                let (mu, v) = ens.predict_batch(m, s.view(), a.view());
                for (j, &r) in idx.iter().enumerate() {
                    mean.row_mut(r).assign(&mu.row(j));
                    var.row_mut(r).assign(&v.row(j));
                }
            }
            let mut next = mean;
            if stochastic {
                for (c, rng) in rngs.iter_mut().enumerate() {
                    for pi in 0..p {
                        let r = c * p + pi;
                        for d in 0..od {
                            let z: f64 = rng.sample(StandardNormal);
                            next[[r, d]] += var[[r, d]].sqrt() * z;
                        }
                    }
                }
            }
            if mode.kind == PropagationKind::DS && p > 1 {
                moment_match_resample(&mut next, n_cand, p, &mut rngs);
            }
            next
        };
        state = next;
        for (c, o) in out.iter_mut().enumerate() {
            for pi in 0..p {
                for d in 0..od {
                    o[[pi, t + 1, d]] = state[[c * p + pi, d]];
                }
            }
        }
    }
    Ok(out.into_iter().map(|states| ParticleRollout { states }).collect())
}

/// Replaces each candidate's particles by draws from the diagonal Gaussian
/// with their sample mean and population variance.
fn moment_match_resample<R: Rng>(x: &mut Array2<f64>, n_cand: usize, p: usize, rngs: &mut [R]) {
    let od = x.ncols();
    for c in 0..n_cand {
        for d in 0..od {
            let vals: Vec<f64> = (0..p).map(|pi| x[[c * p + pi, d]]).collect();
            let mean = vals.iter().sum::<f64>() / p as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / p as f64;
            let sd = var.sqrt();
            for pi in 0..p {
                let z: f64 = rngs[c].sample(StandardNormal);
                x[[c * p + pi, d]] = mean + sd * z;
            }
        }
    }
}
