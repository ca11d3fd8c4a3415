use std::sync::Arc;

use super::{apply_termination_scheme, TerminationScheme};
use crate::dynamics::{propagate_batch, DynamicsEnsemble, PropagationMode};
use crate::envs::Environment;
use crate::error::{check_dim, Result};
use crate::par::{map_range, Exec};
use crate::rng::RngStream;

/// Candidates are evaluated in fixed chunks of this many sequences. Chunk
/// boundaries depend only on the population, never on the worker count.
pub const CHUNK: usize = 64;

/// Simulator used to score candidate action sequences.
#[derive(Debug, Clone)]
pub enum RolloutBackend {
    /// The environment's own transition function.
    GroundTruth(Arc<dyn Environment>),
    /// A learned ensemble; rewards and termination still come from `env`.
    Learned {
        env: Arc<dyn Environment>,
        ensemble: Arc<DynamicsEnsemble>,
        mode: PropagationMode,
    },
}

impl RolloutBackend {
    pub fn env(&self) -> &Arc<dyn Environment> {
        match self {
            RolloutBackend::GroundTruth(env) | RolloutBackend::Learned { env, .. } => env,
        }
    }
}

/// A backend plus the scoring rule for predicted trajectories.
#[derive(Debug, Clone)]
pub struct Objective {
    pub backend: RolloutBackend,
    pub scheme: TerminationScheme,
    pub alive_bonus: f64,
    pub exec: Exec,
}

impl Objective {
    pub fn new(backend: RolloutBackend) -> Self {
        Self {
            backend,
            scheme: TerminationScheme::D,
            alive_bonus: 1.0,
            exec: Exec::Parallel,
        }
    }

    pub fn with_scheme(mut self, scheme: TerminationScheme, alive_bonus: f64) -> Self {
        self.scheme = scheme;
        self.alive_bonus = alive_bonus;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn env(&self) -> &Arc<dyn Environment> {
        self.backend.env()
    }

    /// Expected return of one action sequence from `s0`.
    pub fn evaluate(&self, s0: &[f64], actions: &[Vec<f64>], stream: &RngStream) -> Result<f64> {
        Ok(self.evaluate_chunk(s0, &[actions.to_vec()], std::slice::from_ref(stream))?[0])
    }

    /// Scores every candidate; candidate `i` draws from `stream.split(i)`.
    pub fn evaluate_batch(&self, s0: &[f64], candidates: &[Vec<Vec<f64>>], stream: &RngStream) -> Result<Vec<f64>> {
        let spec = self.env().spec();
        check_dim("planning state", spec.obs_dim, s0.len())?;
        let n_chunks = candidates.len().div_ceil(CHUNK);
        let chunks = map_range(self.exec, n_chunks, |c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(candidates.len());
            let streams: Vec<RngStream> = (lo..hi).map(|i| stream.split(i as u64)).collect();
            self.evaluate_chunk(s0, &candidates[lo..hi], &streams)
        });
        let mut out = Vec::with_capacity(candidates.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    fn evaluate_chunk(&self, s0: &[f64], candidates: &[Vec<Vec<f64>>], streams: &[RngStream]) -> Result<Vec<f64>> {
        let env = self.env().as_ref();
        let spec = env.spec();
        let predicate = env.termination();
        match &self.backend {
            RolloutBackend::GroundTruth(_) => {
                let mut act = vec![0.0; spec.act_dim];
                let mut states = Vec::new();
                let mut rewards = Vec::new();
                let mut out = Vec::with_capacity(candidates.len());
                for cand in candidates {
                    states.clear();
                    rewards.clear();
                    states.push(s0.to_vec());
                    for a in cand {
                        check_dim("action", spec.act_dim, a.len())?;
                        act.copy_from_slice(a);
                        spec.clamp_in_place(&mut act);
                        let mut next = vec![0.0; spec.obs_dim];
                        let s = states.last().unwrap();
                        env.step_raw(s, &act, &mut next);
                        rewards.push(env.reward_raw(s, &act, &next));
                        states.push(next);
                    }
                    let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
                    out.push(finite_or_neg_inf(apply_termination_scheme(
                        &refs,
                        &rewards,
                        predicate,
                        &self.scheme,
                        self.alive_bonus,
                    )));
                }
                Ok(out)
            }
            RolloutBackend::Learned { ensemble, mode, .. } => {
                let clamped: Vec<Vec<Vec<f64>>> = candidates
                    .iter()
                    .map(|c| {
                        c.iter()
                            .map(|a| {
                                let mut a = a.clone();
                                spec.clamp_in_place(&mut a);
                                a
                            })
                            .collect()
                    })
                    .collect();
                let refs: Vec<&[Vec<f64>]> = clamped.iter().map(|c| c.as_slice()).collect();
                let rollouts = propagate_batch(ensemble, *mode, s0, &refs, streams)?;
                let mut out = Vec::with_capacity(candidates.len());
                for (roll, actions) in rollouts.iter().zip(&clamped) {
                    let h = roll.horizon();
                    let mut total = 0.0;
                    for p in 0..roll.particles() {
                        let states: Vec<Vec<f64>> = (0..=h).map(|t| roll.state(p, t)).collect();
                        let rewards: Vec<f64> = (0..h).map(|t| env.reward_raw(&states[t], &actions[t], &states[t + 1])).collect();
                        let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
                        total += apply_termination_scheme(&refs, &rewards, predicate, &self.scheme, self.alive_bonus);
                    }
                    out.push(finite_or_neg_inf(total / roll.particles() as f64));
                }
                Ok(out)
            }
        }
    }
}

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NEG_INFINITY
    }
}
