use super::constants::*;
use super::{unknown_param, Environment};
use crate::error::Result;
use crate::types::{EnvSpec, InitDistribution};

/// Continuous mountain car. Observation `(position, velocity)`; the reward
/// is the next position. Runs the full horizon with no goal termination.
#[derive(Debug, Clone)]
pub struct MountainCar {
    spec: EnvSpec,
    pub power: f64,
    pub hill: f64,
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "mountaincar".into(),
                obs_dim: 2,
                act_dim: 1,
                horizon: MOUNTAINCAR_HORIZON,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                has_termination: false,
                init_distribution: InitDistribution::Uniform {
                    low: vec![-0.6, 0.0],
                    high: vec![-0.4, 0.0],
                },
                gamma: 1.0,
            },
            power: MOUNTAINCAR_POWER,
            hill: MOUNTAINCAR_HILL,
            min_position: MOUNTAINCAR_MIN_POSITION,
            max_position: MOUNTAINCAR_MAX_POSITION,
            max_speed: MOUNTAINCAR_MAX_SPEED,
        }
    }
}

impl Environment for MountainCar {
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
        let (p, v) = (s[0], s[1]);
        let mut v = v + a[0] * self.power - self.hill * (3.0 * p).cos();
        v = v.clamp(-self.max_speed, self.max_speed);
        let mut p = p + v;
        p = p.clamp(self.min_position, self.max_position);
        if p == self.min_position && v < 0.0 {
            v = 0.0;
        }
        next[0] = p;
        next[1] = v;
    }

    fn reward_raw(&self, _s: &[f64], _a: &[f64], n: &[f64]) -> f64 {
        n[0]
    }

    fn reward_gradient_raw(&self, _s: &[f64], _a: &[f64], _n: &[f64], d_next: &mut [f64], d_a: &mut [f64]) {
        d_next[0] = 1.0;
        d_next[1] = 0.0;
        d_a[0] = 0.0;
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "power" => self.power = value,
            "hill" => self.hill = value,
            "min_position" => self.min_position = value,
            "max_position" => self.max_position = value,
            "max_speed" => self.max_speed = value,
            _ => return Err(unknown_param("mountaincar", key, &self.params())),
        }
        Ok(())
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("power", self.power),
            ("hill", self.hill),
            ("min_position", self.min_position),
            ("max_position", self.max_position),
            ("max_speed", self.max_speed),
        ]
    }
}
