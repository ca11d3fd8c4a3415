//! Analytic classic-control environments.
//!
//! Every environment steps directly on its observation vector: the
//! observation carries enough information (angles as cos/sin pairs, target
//! positions) to recover the full physical state, so `step` is a pure
//! function of `(observation, action)` and learned models can be trained on
//! the same vectors the planners roll out.

mod acrobot;
mod cartpole;
pub mod constants;
mod lqr;
mod mountaincar;
mod noise;
mod pendulum;
mod reacher;

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use lqr::LinearQuadratic;
pub use mountaincar::MountainCar;
pub use noise::{NoiseWrapper, NoisyStep};
pub use pendulum::Pendulum;
pub use reacher::Reacher2d;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::rng::RngStream;
use crate::types::{ActionVec, EnvSpec, StateVec};

/// Registered environment names.
pub const ENV_NAMES: [&str; 6] = [
    "pendulum",
    "cartpole",
    "cartpole_et",
    "acrobot",
    "mountaincar",
    "reacher2d",
];

/// State predicate that ends an episode before the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TerminationPredicate {
    /// `|theta| > theta_limit || |x| > x_limit` on a cart-pole observation.
    CartPole { theta_limit: f64, x_limit: f64 },
}

impl TerminationPredicate {
    pub fn is_terminal(&self, s: &[f64]) -> bool {
        match *self {
            TerminationPredicate::CartPole {
                theta_limit,
                x_limit,
            } => s[2].abs() > theta_limit || s[0].abs() > x_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: StateVec,
    pub reward: f64,
    pub terminated: bool,
}

/// A deterministic dynamical system with an analytic reward.
///
/// The `*_raw` methods work on plain slices for the planners' inner loops;
/// they assume correct lengths and an already clamped action.
pub trait Environment: Debug + Send + Sync {
    fn spec(&self) -> &EnvSpec;

    fn spec_mut(&mut self) -> &mut EnvSpec;

    /// Observation for a vector of sampled initial coordinates.
    fn observe(&self, coords: &[f64]) -> Vec<f64>;

    fn step_raw(&self, s: &[f64], a: &[f64], next: &mut [f64]);

    /// Reward of the transition `(s, a, next)`.
    fn reward_raw(&self, s: &[f64], a: &[f64], next: &[f64]) -> f64;

    /// Analytic partials of the reward with respect to `next` and `a`,
    /// written into the output slices.
    fn reward_gradient_raw(&self, s: &[f64], a: &[f64], next: &[f64], d_next: &mut [f64], d_a: &mut [f64]);

    fn termination(&self) -> Option<&TerminationPredicate> {
        None
    }

    /// Overrides a named physical constant.
    fn set_param(&mut self, key: &str, value: f64) -> Result<()>;

    /// Current values of all overridable constants.
    fn params(&self) -> Vec<(&'static str, f64)>;

    fn is_terminal(&self, s: &[f64]) -> bool {
        self.termination().is_some_and(|p| p.is_terminal(s))
    }

    /// Draws an initial observation from the environment's initial-state
    /// distribution.
    fn reset(&self, stream: &RngStream) -> StateVec {
        let mut rng = stream.rng();
        let coords = self.spec().init_distribution.sample(&mut rng);
        StateVec::from_raw(self.observe(&coords))
    }

    /// Clamps `a`, advances one control interval and scores the transition.
    fn step(&self, s: &StateVec, a: &ActionVec) -> Result<StepOutcome> {
        let spec = self.spec();
        check_dim("state", spec.obs_dim, s.len())?;
        check_dim("action", spec.act_dim, a.len())?;
        check_finite("state", s)?;
        check_finite("action", a)?;
        let mut act = a.to_vec();
        spec.clamp_in_place(&mut act);
        let mut next = vec![0.0; spec.obs_dim];
        self.step_raw(s, &act, &mut next);
        check_finite("next state", &next)?;
        let reward = self.reward_raw(s, &act, &next);
        Ok(StepOutcome {
            terminated: self.is_terminal(&next),
            next: StateVec::from_raw(next),
            reward,
        })
    }

    fn reward(&self, s: &StateVec, a: &ActionVec, next: &StateVec) -> f64 {
        self.reward_raw(s, a, next)
    }

    /// `(dr/dnext, dr/da)`.
    fn reward_gradient(&self, s: &StateVec, a: &ActionVec, next: &StateVec) -> (Vec<f64>, Vec<f64>) {
        let mut d_next = vec![0.0; next.len()];
        let mut d_a = vec![0.0; a.len()];
        self.reward_gradient_raw(s, a, next, &mut d_next, &mut d_a);
        (d_next, d_a)
    }
}

pub(crate) fn unknown_param(env: &str, key: &str, params: &[(&'static str, f64)]) -> Error {
    let known: Vec<&str> = params.iter().map(|(k, _)| *k).collect();
    Error::Config(format!(
        "unknown parameter '{key}' for {env} (known: {})",
        known.join(", ")
    ))
}

/// Builds a registered environment with default constants.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    let env: Box<dyn Environment> = match name {
        "pendulum" => Box::new(Pendulum::default()),
        "cartpole" => Box::new(CartPole::default()),
        "cartpole_et" => Box::new(CartPole::early_termination()),
        "acrobot" => Box::new(Acrobot::default()),
        "mountaincar" => Box::new(MountainCar::default()),
        "reacher2d" => Box::new(Reacher2d::default()),
        other => return Err(Error::UnknownEnv(other.to_string())),
    };
    Ok(env)
}

/// Builds a registered environment and applies constant overrides.
pub fn make_env_with(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Arc<dyn Environment>> {
    let mut env = make_env(name)?;
    for (k, v) in overrides {
        env.set_param(k, *v)?;
    }
    env.spec().validate()?;
    Ok(Arc::from(env))
}

/// Runs an open-loop action sequence from `s0` and returns the trajectory
/// of visited states (including `s0`) and rewards.
pub fn rollout_open_loop(env: &dyn Environment, s0: &[f64], actions: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let spec = env.spec();
    let mut states = vec![s0.to_vec()];
    let mut rewards = Vec::with_capacity(actions.len());
    let mut act = vec![0.0; spec.act_dim];
    for a in actions {
        act.copy_from_slice(a);
        spec.clamp_in_place(&mut act);
        let s = states.last().unwrap();
        let mut next = vec![0.0; spec.obs_dim];
        env.step_raw(s, &act, &mut next);
        rewards.push(env.reward_raw(s, &act, &next));
        states.push(next);
    }
    (states, rewards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Central finite difference of the reward in `next` and `a`.
    fn fd_gradient(env: &dyn Environment, s: &[f64], a: &[f64], next: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
        let mut d_next = vec![0.0; next.len()];
        let mut n = next.to_vec();
        for i in 0..n.len() {
            let x = n[i];
            n[i] = x + h;
            let fp = env.reward_raw(s, a, &n);
            n[i] = x - h;
            let fm = env.reward_raw(s, a, &n);
            n[i] = x;
            d_next[i] = (fp - fm) / (2.0 * h);
        }
        let mut d_a = vec![0.0; a.len()];
        let mut aa = a.to_vec();
        for i in 0..aa.len() {
            let x = aa[i];
            aa[i] = x + h;
            let fp = env.reward_raw(s, &aa, next);
            aa[i] = x - h;
            let fm = env.reward_raw(s, &aa, next);
            aa[i] = x;
            d_a[i] = (fp - fm) / (2.0 * h);
        }
        (d_next, d_a)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn registry_dimensions() {
        let table = [
            ("pendulum", 3, 1, 200),
            ("cartpole", 4, 1, 200),
            ("cartpole_et", 4, 1, 200),
            ("acrobot", 6, 1, 200),
            ("mountaincar", 2, 1, 200),
            ("reacher2d", 11, 2, 50),
        ];
        for (name, obs, act, h) in table {
            let env = make_env(name).unwrap();
            let s = env.spec();
            assert_eq!((s.obs_dim, s.act_dim, s.horizon), (obs, act, h), "{name}");
            assert_eq!(s.name, name);
            s.validate().unwrap();
            assert_eq!(s.has_termination, name == "cartpole_et");
        }
        assert!(matches!(make_env("hopper"), Err(Error::UnknownEnv(_))));
    }

    #[test]
    fn reward_gradients_match_finite_differences() {
        let mut rng = RngStream::root(11).rng();
        for name in ENV_NAMES {
            let env = make_env(name).unwrap();
            let spec = env.spec().clone();
            for _ in 0..100 {
                let s = env.reset(&RngStream::new(rng.random(), 0));
                let a: Vec<f64> = (0..spec.act_dim)
                    .map(|i| rng.random_range(spec.action_low[i]..spec.action_high[i]))
                    .collect();
                let mut next = vec![0.0; spec.obs_dim];
                env.step_raw(&s, &a, &mut next);
                let (gn, ga) = env.reward_gradient(&s, &ActionVec::new(a.clone()).unwrap(), &StateVec::new(next.clone()).unwrap());
                let (fn_, fa) = fd_gradient(env.as_ref(), &s, &a, &next, 1e-6);
                for (x, y) in gn.iter().zip(&fn_).chain(ga.iter().zip(&fa)) {
                    assert!(rel_err(*x, *y) < 1e-5, "{name}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn step_is_pure() {
        for name in ENV_NAMES {
            let env = make_env(name).unwrap();
            let s = env.reset(&RngStream::root(3));
            let a = ActionVec::new(env.spec().action_high.iter().map(|h| 0.3 * h).collect()).unwrap();
            assert_eq!(env.step(&s, &a).unwrap(), env.step(&s, &a).unwrap(), "{name}");
        }
    }

    #[test]
    fn step_rejects_bad_input() {
        let env = make_env("pendulum").unwrap();
        let s = StateVec::from_raw(vec![1.0, f64::NAN, 0.0]);
        let a = ActionVec::new(vec![0.0]).unwrap();
        assert!(matches!(env.step(&s, &a), Err(Error::NonFinite(_))));
        let s = StateVec::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(env.step(&s, &a), Err(Error::Dimension { .. })));
    }

    #[test]
    fn reset_is_deterministic() {
        for name in ENV_NAMES {
            let env = make_env(name).unwrap();
            let st = RngStream::new(5, 17);
            assert_eq!(env.reset(&st), env.reset(&st));
        }
    }

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let mut o = BTreeMap::new();
        o.insert("gravity".to_string(), 9.81);
        let env = make_env_with("pendulum", &o).unwrap();
        assert!(env.params().contains(&("gravity", 9.81)));
        o.insert("warp_drive".to_string(), 1.0);
        assert!(matches!(make_env_with("pendulum", &o), Err(Error::Config(_))));
    }

    #[test]
    fn open_loop_rollout_is_reproducible() {
        let env = make_env("acrobot").unwrap();
        let s0 = env.reset(&RngStream::root(1));
        let acts: Vec<Vec<f64>> = (0..30).map(|t| vec![((t as f64) * 0.7).sin()]).collect();
        assert_eq!(
            rollout_open_loop(env.as_ref(), &s0, &acts),
            rollout_open_loop(env.as_ref(), &s0, &acts)
        );
    }
}
