use serde::{Deserialize, Serialize};

use crate::envs::TerminationPredicate;
use crate::error::{Error, Result};

/// Penalty multipliers for the alive-bonus sweep.
pub const PENALTY_MULTIPLIERS: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 30.0];

/// How planning and data collection treat episode termination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TerminationScheme {
    /// Environment never terminates; planner unaware.
    A,
    /// Environment terminates; predicted terminal steps score
    /// `-multiplier * alive_bonus` each.
    B { multiplier: f64 },
    /// Environment terminates; rewards after a predicted termination are zero.
    C,
    /// Environment terminates; planner unaware.
    D,
    /// As C, and each real termination is followed by `extra_steps`
    /// random-action transitions added to the model's training data.
    E { extra_steps: usize },
}

impl TerminationScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TerminationScheme::B { multiplier } if !(multiplier > 0.0 && multiplier.is_finite()) => {
                Err(Error::Config(format!("penalty multiplier must be positive, got {multiplier}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether real episodes end at a terminal state.
    pub fn env_terminates(&self) -> bool {
        !matches!(self, TerminationScheme::A)
    }

    /// Whether candidate scoring looks at predicted termination.
    pub fn planner_aware(&self) -> bool {
        matches!(self, TerminationScheme::B { .. } | TerminationScheme::C | TerminationScheme::E { .. })
    }

    pub fn extra_steps(&self) -> usize {
        match *self {
            TerminationScheme::E { extra_steps } => extra_steps,
            _ => 0,
        }
    }

    pub fn letter(&self) -> &'static str {
        match self {
            TerminationScheme::A => "A",
            TerminationScheme::B { .. } => "B",
            TerminationScheme::C => "C",
            TerminationScheme::D => "D",
            TerminationScheme::E { .. } => "E",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeKind {
    A,
    B,
    C,
    D,
    E,
}

/// The `[termination]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminationConfig {
    pub scheme: SchemeKind,
    pub penalty_multiplier: f64,
    pub alive_bonus: f64,
    pub extra_steps: usize,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeKind::D,
            penalty_multiplier: 1.0,
            alive_bonus: 1.0,
            extra_steps: 100,
        }
    }
}

impl TerminationConfig {
    pub fn scheme(&self) -> Result<TerminationScheme> {
        let s = match self.scheme {
            SchemeKind::A => TerminationScheme::A,
            SchemeKind::B => TerminationScheme::B {
                multiplier: self.penalty_multiplier,
            },
            SchemeKind::C => TerminationScheme::C,
            SchemeKind::D => TerminationScheme::D,
            SchemeKind::E => TerminationScheme::E {
                extra_steps: self.extra_steps,
            },
        };
        s.validate()?;
        if !self.alive_bonus.is_finite() {
            return Err(Error::Config("alive_bonus must be finite".into()));
        }
        Ok(s)
    }
}

/// Scores one predicted trajectory. `states[t]` is the state the reward
/// `rewards[t]` was collected from; the first `t` whose state satisfies the
/// predicate marks the predicted termination.
pub fn apply_termination_scheme(
    states: &[&[f64]],
    rewards: &[f64],
    predicate: Option<&TerminationPredicate>,
    scheme: &TerminationScheme,
    alive_bonus: f64,
) -> f64 {
    let cut = match predicate {
        Some(p) if scheme.planner_aware() => states.iter().take(rewards.len()).position(|s| p.is_terminal(s)),
        _ => None,
    };
    match (cut, scheme) {
        (None, _) => rewards.iter().sum(),
        (Some(k), TerminationScheme::B { multiplier }) => {
            rewards[..k].iter().sum::<f64>() - (rewards.len() - k) as f64 * multiplier * alive_bonus
        }
        (Some(k), _) => rewards[..k].iter().sum(),
    }
}
