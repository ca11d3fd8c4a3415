use super::constants::*;
use super::{unknown_param, Environment, TerminationPredicate};
use crate::error::Result;
use crate::types::{EnvSpec, InitDistribution};

/// Cart-pole with a continuous force command in `[-1, 1]` scaled by
/// `force_mag`. Observation `(x, x_dot, theta, theta_dot)`, `theta = 0`
/// upright. Reward `cos theta - 0.01 x^2` on the next state.
///
/// With `discrete = true` the command is thresholded at zero to `{-1, 1}`.
#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub discrete: bool,
    termination: Option<TerminationPredicate>,
}

impl Default for CartPole {
    fn default() -> Self {
        let r = CARTPOLE_INIT_RANGE;
        Self {
            spec: EnvSpec {
                name: "cartpole".into(),
                obs_dim: 4,
                act_dim: 1,
                horizon: CARTPOLE_HORIZON,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                has_termination: false,
                init_distribution: InitDistribution::Uniform {
                    low: vec![-r; 4],
                    high: vec![r; 4],
                },
                gamma: 1.0,
            },
            gravity: CARTPOLE_GRAVITY,
            cart_mass: CARTPOLE_CART_MASS,
            pole_mass: CARTPOLE_POLE_MASS,
            half_length: CARTPOLE_HALF_LENGTH,
            force_mag: CARTPOLE_FORCE_MAG,
            dt: CARTPOLE_DT,
            discrete: false,
            termination: None,
        }
    }
}

impl CartPole {
    /// `cartpole_et`: ends the episode when `|theta| > 0.4` or `|x| > 2.4`.
    pub fn early_termination() -> Self {
        let mut env = Self::default();
        env.spec.name = "cartpole_et".into();
        env.spec.has_termination = true;
        env.termination = Some(TerminationPredicate::CartPole {
            theta_limit: CARTPOLE_ET_THETA_LIMIT,
            x_limit: CARTPOLE_ET_X_LIMIT,
        });
        env
    }

    pub fn with_termination(mut self, predicate: TerminationPredicate) -> Self {
        self.spec.has_termination = true;
        self.termination = Some(predicate);
        self
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn spec_mut(&mut self) -> &mut EnvSpec {
        &mut self.spec
    }

    fn observe(&self, c: &[f64]) -> Vec<f64> {
        c.to_vec()
    }

    fn step_raw(&self, s: &[f64], a: &[f64], next: &mut [f64]) {
        let (x, x_dot, theta, theta_dot) = (s[0], s[1], s[2], s[3]);
        let command = if self.discrete {
            if a[0] > 0.0 {
                1.0
            } else {
                -1.0
            }
        } else {
            a[0]
        };
        let force = self.force_mag * command;
        let total_mass = self.cart_mass + self.pole_mass;
        let pml = self.pole_mass * self.half_length;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pml * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pml * theta_acc * cos / total_mass;
        next[0] = x + self.dt * x_dot;
        next[1] = x_dot + self.dt * x_acc;
        next[2] = theta + self.dt * theta_dot;
        next[3] = theta_dot + self.dt * theta_acc;
    }

    fn reward_raw(&self, _s: &[f64], _a: &[f64], n: &[f64]) -> f64 {
        n[2].cos() - 0.01 * n[0] * n[0]
    }

    fn reward_gradient_raw(&self, _s: &[f64], _a: &[f64], n: &[f64], d_next: &mut [f64], d_a: &mut [f64]) {
        d_next[0] = -0.02 * n[0];
        d_next[1] = 0.0;
        d_next[2] = -n[2].sin();
        d_next[3] = 0.0;
        d_a[0] = 0.0;
    }

    fn termination(&self) -> Option<&TerminationPredicate> {
        self.termination.as_ref()
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "gravity" => self.gravity = value,
            "cart_mass" => self.cart_mass = value,
            "pole_mass" => self.pole_mass = value,
            "half_length" => self.half_length = value,
            "force_mag" => self.force_mag = value,
            "dt" => self.dt = value,
            "discrete" => self.discrete = value != 0.0,
            "theta_limit" | "x_limit" if self.termination.is_some() => {
                if let Some(TerminationPredicate::CartPole {
                    theta_limit,
                    x_limit,
                }) = self.termination.as_mut()
                {
                    if key == "theta_limit" {
                        *theta_limit = value;
                    } else {
                        *x_limit = value;
                    }
                }
            }
            _ => return Err(unknown_param(&self.spec.name, key, &self.params())),
        }
        Ok(())
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        let mut p = vec![
            ("gravity", self.gravity),
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("half_length", self.half_length),
            ("force_mag", self.force_mag),
            ("dt", self.dt),
            ("discrete", if self.discrete { 1.0 } else { 0.0 }),
        ];
        if let Some(TerminationPredicate::CartPole {
            theta_limit,
            x_limit,
        }) = self.termination
        {
            p.push(("theta_limit", theta_limit));
            p.push(("x_limit", x_limit));
        }
        p
    }
}
