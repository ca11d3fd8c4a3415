//! Shared domain types: state/action vectors, transitions, trajectories and
//! environment specifications.

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

/// Observation vector of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(Vec<f64>);

/// Action vector of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionVec(Vec<f64>);

macro_rules! real_vec {
    ($t:ident, $what:literal) => {
        impl $t {
            /// Wraps `values`, rejecting NaN and infinities.
            pub fn new(values: Vec<f64>) -> Result<Self> {
                check_finite($what, &values)?;
                Ok(Self(values))
            }

            pub(crate) fn from_raw(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }
        }

        impl Deref for $t {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl TryFrom<Vec<f64>> for $t {
            type Error = Error;
            fn try_from(v: Vec<f64>) -> Result<Self> {
                Self::new(v)
            }
        }
    };
}

real_vec!(StateVec, "state");
real_vec!(ActionVec, "action");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateVec,
    pub action: ActionVec,
    pub next_state: StateVec,
    pub reward: f64,
    pub terminated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.transitions.iter().map(|t| t.reward)
    }

    pub fn actions(&self) -> impl Iterator<Item = &ActionVec> + '_ {
        self.transitions.iter().map(|t| &t.action)
    }

    /// Discounted return `sum_t gamma^t r_t`, starting at `t = 0`.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        trajectory_return(self, gamma)
    }

    /// Checks chaining (`next_state[t] == state[t+1]`) and that only the
    /// final transition may be terminal.
    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.transitions.windows(2).enumerate() {
            if w[0].next_state != w[1].state {
                return Err(Error::invalid(format!(
                    "transition {i} does not chain into transition {}",
                    i + 1
                )));
            }
            if w[0].terminated {
                return Err(Error::invalid(format!(
                    "non-final transition {i} is terminal"
                )));
            }
        }
        Ok(())
    }
}

/// `sum_t gamma^t r_t`. An empty trajectory returns 0.
pub fn trajectory_return(traj: &Trajectory, gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in traj.rewards() {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// Initial-state distribution over an environment's generalized coordinates
/// (the environment maps coordinates to observations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitDistribution {
    /// Independent uniform per coordinate. `low == high` is a point mass.
    Uniform { low: Vec<f64>, high: Vec<f64> },
    /// Uniform coordinates plus a 2-D target drawn uniformly from a disk.
    UniformWithDiskTarget {
        low: Vec<f64>,
        high: Vec<f64>,
        radius: f64,
    },
}

impl InitDistribution {
    /// Draws the coordinates. For the disk variant the target `(x, y)` is
    /// appended after the uniform coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            InitDistribution::Uniform { low, high } => uniform_box(rng, low, high),
            InitDistribution::UniformWithDiskTarget { low, high, radius } => {
                let mut out = uniform_box(rng, low, high);
                // rejection sampling from the bounding square
                loop {
                    let x = rng.random_range(-1.0..=1.0);
                    let y = rng.random_range(-1.0..=1.0);
                    if x * x + y * y <= 1.0 {
                        out.push(x * radius);
                        out.push(y * radius);
                        break;
                    }
                }
                out
            }
        }
    }

    /// Mean of the sampled coordinates.
    pub fn mean(&self) -> Vec<f64> {
        let mid = |low: &[f64], high: &[f64]| -> Vec<f64> {
            low.iter().zip(high).map(|(l, h)| 0.5 * (l + h)).collect()
        };
        match self {
            InitDistribution::Uniform { low, high } => mid(low, high),
            InitDistribution::UniformWithDiskTarget { low, high, .. } => {
                let mut m = mid(low, high);
                m.extend([0.0, 0.0]);
                m
            }
        }
    }

    /// Per-coordinate standard deviation.
    pub fn std(&self) -> Vec<f64> {
        let sd = |low: &[f64], high: &[f64]| -> Vec<f64> {
            low.iter()
                .zip(high)
                .map(|(l, h)| (h - l) / 12f64.sqrt())
                .collect()
        };
        match self {
            InitDistribution::Uniform { low, high } => sd(low, high),
            InitDistribution::UniformWithDiskTarget { low, high, radius } => {
                let mut s = sd(low, high);
                // marginal of a uniform disk: E[x^2] = r^2 / 4
                s.extend([0.5 * radius, 0.5 * radius]);
                s
            }
        }
    }
}

fn uniform_box<R: Rng + ?Sized>(rng: &mut R, low: &[f64], high: &[f64]) -> Vec<f64> {
    low.iter()
        .zip(high)
        .map(|(&l, &h)| if l == h { l } else { rng.random_range(l..h) })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub horizon: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub has_termination: bool,
    pub init_distribution: InitDistribution,
    pub gamma: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        check_dim("action_low", self.act_dim, self.action_low.len())?;
        check_dim("action_high", self.act_dim, self.action_high.len())?;
        if self
            .action_low
            .iter()
            .zip(&self.action_high)
            .any(|(l, h)| l.partial_cmp(h) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::invalid("action_low must be < action_high elementwise"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma {} not in (0, 1]", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        Ok(())
    }

    /// Clamps a raw slice in place. Caller guarantees the length.
    pub fn clamp_in_place(&self, a: &mut [f64]) {
        for ((x, lo), hi) in a.iter_mut().zip(&self.action_low).zip(&self.action_high) {
            *x = x.clamp(*lo, *hi);
        }
    }
}

/// Elementwise clamp of `a` into the action box of `spec`.
pub fn clamp_action(a: &ActionVec, spec: &EnvSpec) -> Result<ActionVec> {
    check_dim("action", spec.act_dim, a.len())?;
    let mut v = a.0.clone();
    spec.clamp_in_place(&mut v);
    Ok(ActionVec(v))
}
