use std::f64::consts::PI;

use super::constants::*;
use super::{unknown_param, Environment};
use crate::error::Result;
use crate::types::{EnvSpec, InitDistribution};

/// Torque-limited pendulum with the classic-control dynamics: `theta = 0`
/// is the unstable upright position. Observation
/// `(cos theta, sin theta, theta_dot)`; reward
/// `-cos theta - 0.1 sin theta - 0.1 theta_dot^2 - 0.001 a^2`, which peaks at
/// `theta = pi`, the hanging rest position.
///
/// The `-0.1 sin theta` term is asymmetric in theta and is kept as tabulated
/// for this benchmark.
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_speed: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum".into(),
                obs_dim: 3,
                act_dim: 1,
                horizon: PENDULUM_HORIZON,
                action_low: vec![-PENDULUM_MAX_TORQUE],
                action_high: vec![PENDULUM_MAX_TORQUE],
                has_termination: false,
                // coordinates (theta, theta_dot)
                init_distribution: InitDistribution::Uniform {
                    low: vec![-PI, -1.0],
                    high: vec![PI, 1.0],
                },
                gamma: 1.0,
            },
            gravity: PENDULUM_GRAVITY,
            mass: PENDULUM_MASS,
            length: PENDULUM_LENGTH,
            dt: PENDULUM_DT,
            max_speed: PENDULUM_MAX_SPEED,
        }
    }
}

impl Pendulum {
    /// Mechanical energy per unit rotational inertia, used to document the
    /// integrator's drift.
    pub fn energy(&self, s: &[f64]) -> f64 {
        0.5 * s[2] * s[2] + 1.5 * self.gravity / self.length * s[0]
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn spec_mut(&mut self) -> &mut EnvSpec {
        &mut self.spec
    }

    fn observe(&self, c: &[f64]) -> Vec<f64> {
        vec![c[0].cos(), c[0].sin(), c[1]]
    }

    fn step_raw(&self, s: &[f64], a: &[f64], next: &mut [f64]) {
        let theta = s[1].atan2(s[0]);
        let u = a[0];
        let ml2 = self.mass * self.length * self.length;
        let acc = 1.5 * self.gravity / self.length * theta.sin() + 3.0 / ml2 * u;
        let thdot = (s[2] + acc * self.dt).clamp(-self.max_speed, self.max_speed);
        let th = theta + thdot * self.dt;
        next[0] = th.cos();
        next[1] = th.sin();
        next[2] = thdot;
    }

    fn reward_raw(&self, _s: &[f64], a: &[f64], n: &[f64]) -> f64 {
        -n[0] - 0.1 * n[1] - 0.1 * n[2] * n[2] - 0.001 * a[0] * a[0]
    }

    fn reward_gradient_raw(&self, _s: &[f64], a: &[f64], n: &[f64], d_next: &mut [f64], d_a: &mut [f64]) {
        d_next[0] = -1.0;
        d_next[1] = -0.1;
        d_next[2] = -0.2 * n[2];
        d_a[0] = -0.002 * a[0];
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "gravity" => self.gravity = value,
            "mass" => self.mass = value,
            "length" => self.length = value,
            "dt" => self.dt = value,
            "max_speed" => self.max_speed = value,
            "max_torque" => {
                self.spec.action_low = vec![-value];
                self.spec.action_high = vec![value];
            }
            _ => return Err(unknown_param("pendulum", key, &self.params())),
        }
        Ok(())
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("gravity", self.gravity),
            ("mass", self.mass),
            ("length", self.length),
            ("dt", self.dt),
            ("max_speed", self.max_speed),
            ("max_torque", self.spec.action_high[0]),
        ]
    }
}
