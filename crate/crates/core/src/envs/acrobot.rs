use std::f64::consts::FRAC_PI_2;

use super::constants::*;
use super::{unknown_param, Environment};
use crate::error::Result;
use crate::types::{EnvSpec, InitDistribution};

/// Two-link acrobot with torque on the elbow joint. Observation
/// `(cos t1, sin t1, cos t2, sin t2, t1_dot, t2_dot)`; both links hang down
/// at `t1 = t2 = 0`. Reward is the tip height `-cos t1 - cos(t1 + t2)`.
#[derive(Debug, Clone)]
pub struct Acrobot {
    spec: EnvSpec,
    pub gravity: f64,
    pub link_length_1: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub link_com_1: f64,
    pub link_com_2: f64,
    pub link_moi: f64,
    pub dt: f64,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
}

impl Default for Acrobot {
    fn default() -> Self {
        let r = ACROBOT_INIT_RANGE;
        Self {
            spec: EnvSpec {
                name: "acrobot".into(),
                obs_dim: 6,
                act_dim: 1,
                horizon: ACROBOT_HORIZON,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                has_termination: false,
                // coordinates (t1, t2, t1_dot, t2_dot)
                init_distribution: InitDistribution::Uniform {
                    low: vec![-r; 4],
                    high: vec![r; 4],
                },
                gamma: 1.0,
            },
            gravity: ACROBOT_GRAVITY,
            link_length_1: ACROBOT_LINK_LENGTH_1,
            link_mass_1: ACROBOT_LINK_MASS_1,
            link_mass_2: ACROBOT_LINK_MASS_2,
            link_com_1: ACROBOT_LINK_COM_1,
            link_com_2: ACROBOT_LINK_COM_2,
            link_moi: ACROBOT_LINK_MOI,
            dt: ACROBOT_DT,
            max_vel_1: ACROBOT_MAX_VEL_1,
            max_vel_2: ACROBOT_MAX_VEL_2,
        }
    }
}

impl Acrobot {
    fn derivs(&self, q: [f64; 4], torque: f64) -> [f64; 4] {
        let (m1, m2) = (self.link_mass_1, self.link_mass_2);
        let l1 = self.link_length_1;
        let (lc1, lc2) = (self.link_com_1, self.link_com_2);
        let (i1, i2) = (self.link_moi, self.link_moi);
        let g = self.gravity;
        let [t1, t2, dt1, dt2] = q;
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * t2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * t2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (t1 + t2 - FRAC_PI_2).cos();
        let phi1 = -m2 * l1 * lc2 * dt2 * dt2 * t2.sin() - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * t2.sin()
            + (m1 * lc1 + m2 * l1) * g * (t1 - FRAC_PI_2).cos()
            + phi2;
        let ddt2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1 * dt1 * t2.sin() - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let ddt1 = -(d2 * ddt2 + phi1) / d1;
        [dt1, dt2, ddt1, ddt2]
    }
}

pub(crate) fn rk4<const N: usize>(f: impl Fn([f64; N]) -> [f64; N], y: [f64; N], h: f64) -> [f64; N] {
    let add = |a: [f64; N], b: [f64; N], s: f64| -> [f64; N] {
        let mut o = a;
        for i in 0..N {
            o[i] += s * b[i];
        }
        o
    };
    let k1 = f(y);
    let k2 = f(add(y, k1, h / 2.0));
    let k3 = f(add(y, k2, h / 2.0));
    let k4 = f(add(y, k3, h));
    let mut out = y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

impl Environment for Acrobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn spec_mut(&mut self) -> &mut EnvSpec {
        &mut self.spec
    }

    fn observe(&self, c: &[f64]) -> Vec<f64> {
        vec![c[0].cos(), c[0].sin(), c[1].cos(), c[1].sin(), c[2], c[3]]
    }

    fn step_raw(&self, s: &[f64], a: &[f64], next: &mut [f64]) {
        let q = [s[1].atan2(s[0]), s[3].atan2(s[2]), s[4], s[5]];
        let q = rk4(|y| self.derivs(y, a[0]), q, self.dt);
        next[0] = q[0].cos();
        next[1] = q[0].sin();
        next[2] = q[1].cos();
        next[3] = q[1].sin();
        next[4] = q[2].clamp(-self.max_vel_1, self.max_vel_1);
        next[5] = q[3].clamp(-self.max_vel_2, self.max_vel_2);
    }

    fn reward_raw(&self, _s: &[f64], _a: &[f64], n: &[f64]) -> f64 {
        // cos(t1 + t2) = c1 c2 - s1 s2
        -n[0] - (n[0] * n[2] - n[1] * n[3])
    }

    fn reward_gradient_raw(&self, _s: &[f64], _a: &[f64], n: &[f64], d_next: &mut [f64], d_a: &mut [f64]) {
        d_next[0] = -1.0 - n[2];
        d_next[1] = n[3];
        d_next[2] = -n[0];
        d_next[3] = n[1];
        d_next[4] = 0.0;
        d_next[5] = 0.0;
        d_a[0] = 0.0;
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "gravity" => self.gravity = value,
            "link_length_1" => self.link_length_1 = value,
            "link_mass_1" => self.link_mass_1 = value,
            "link_mass_2" => self.link_mass_2 = value,
            "link_com_1" => self.link_com_1 = value,
            "link_com_2" => self.link_com_2 = value,
            "link_moi" => self.link_moi = value,
            "dt" => self.dt = value,
            "max_vel_1" => self.max_vel_1 = value,
            "max_vel_2" => self.max_vel_2 = value,
            _ => return Err(unknown_param("acrobot", key, &self.params())),
        }
        Ok(())
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("gravity", self.gravity),
            ("link_length_1", self.link_length_1),
            ("link_mass_1", self.link_mass_1),
            ("link_mass_2", self.link_mass_2),
            ("link_com_1", self.link_com_1),
            ("link_com_2", self.link_com_2),
            ("link_moi", self.link_moi),
            ("dt", self.dt),
            ("max_vel_1", self.max_vel_1),
            ("max_vel_2", self.max_vel_2),
        ]
    }
}
