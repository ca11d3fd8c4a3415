use super::acrobot::rk4;
use super::constants::*;
use super::{unknown_param, Environment};
use crate::error::Result;
use crate::types::{EnvSpec, InitDistribution};

/// Planar two-link arm reaching for a target resampled every episode.
///
/// Observation (11 entries):
/// `(cos t1, cos t2, sin t1, sin t2, target_x, target_y, t1_dot, t2_dot,
///   tip_x - target_x, tip_y - target_y, 0)`.
/// Reward `-|tip - target| - |a|^2` (Euclidean distance, not squared).
#[derive(Debug, Clone)]
pub struct Reacher2d {
    spec: EnvSpec,
    pub link_length_1: f64,
    pub link_length_2: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub gear: f64,
    pub damping: f64,
    pub dt: f64,
}

impl Default for Reacher2d {
    fn default() -> Self {
        let (ra, rv) = (REACHER_INIT_ANGLE_RANGE, REACHER_INIT_VEL_RANGE);
        Self {
            spec: EnvSpec {
                name: "reacher2d".into(),
                obs_dim: 11,
                act_dim: 2,
                horizon: REACHER_HORIZON,
                action_low: vec![-1.0; 2],
                action_high: vec![1.0; 2],
                has_termination: false,
                // coordinates (t1, t2, t1_dot, t2_dot) + target (x, y)
                init_distribution: InitDistribution::UniformWithDiskTarget {
                    low: vec![-ra, -ra, -rv, -rv],
                    high: vec![ra, ra, rv, rv],
                    radius: REACHER_TARGET_RADIUS,
                },
                gamma: 1.0,
            },
            link_length_1: REACHER_LINK_LENGTH_1,
            link_length_2: REACHER_LINK_LENGTH_2,
            link_mass_1: REACHER_LINK_MASS_1,
            link_mass_2: REACHER_LINK_MASS_2,
            gear: REACHER_GEAR,
            damping: REACHER_DAMPING,
            dt: REACHER_DT,
        }
    }
}

impl Reacher2d {
    pub fn tip(&self, t1: f64, t2: f64) -> (f64, f64) {
        let (l1, l2) = (self.link_length_1, self.link_length_2);
        (
            l1 * t1.cos() + l2 * (t1 + t2).cos(),
            l1 * t1.sin() + l2 * (t1 + t2).sin(),
        )
    }

    fn derivs(&self, q: [f64; 4], a: [f64; 2]) -> [f64; 4] {
        let (l1, l2) = (self.link_length_1, self.link_length_2);
        let (m1, m2) = (self.link_mass_1, self.link_mass_2);
        let (lc1, lc2) = (0.5 * l1, 0.5 * l2);
        let (i1, i2) = (m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0);
        let [_, t2, w1, w2] = q;
        let (s2, c2) = t2.sin_cos();
        let m11 = m1 * lc1 * lc1 + i1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2) + i2;
        let m12 = m2 * (lc2 * lc2 + l1 * lc2 * c2) + i2;
        let m22 = m2 * lc2 * lc2 + i2;
        let h = m2 * l1 * lc2 * s2;
        let tau1 = self.gear * a[0] - self.damping * w1 + h * (2.0 * w1 * w2 + w2 * w2);
        let tau2 = self.gear * a[1] - self.damping * w2 - h * w1 * w1;
        let det = m11 * m22 - m12 * m12;
        let acc1 = (m22 * tau1 - m12 * tau2) / det;
        let acc2 = (m11 * tau2 - m12 * tau1) / det;
        [w1, w2, acc1, acc2]
    }

    fn observation(&self, q: [f64; 4], target: (f64, f64)) -> Vec<f64> {
        let mut out = vec![0.0; 11];
        self.write_observation(q, target, &mut out);
        out
    }

    fn write_observation(&self, q: [f64; 4], target: (f64, f64), out: &mut [f64]) {
        let (tx, ty) = target;
        let (px, py) = self.tip(q[0], q[1]);
        out[0] = q[0].cos();
        out[1] = q[1].cos();
        out[2] = q[0].sin();
        out[3] = q[1].sin();
        out[4] = tx;
        out[5] = ty;
        out[6] = q[2];
        out[7] = q[3];
        out[8] = px - tx;
        out[9] = py - ty;
        out[10] = 0.0;
    }
}

impl Environment for Reacher2d {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn spec_mut(&mut self) -> &mut EnvSpec {
        &mut self.spec
    }

    fn observe(&self, c: &[f64]) -> Vec<f64> {
        self.observation([c[0], c[1], c[2], c[3]], (c[4], c[5]))
    }

    fn step_raw(&self, s: &[f64], a: &[f64], next: &mut [f64]) {
        let q = [s[2].atan2(s[0]), s[3].atan2(s[1]), s[6], s[7]];
        let act = [a[0], a[1]];
        let q = rk4(|y| self.derivs(y, act), q, self.dt);
        self.write_observation(q, (s[4], s[5]), next);
    }

    fn reward_raw(&self, _s: &[f64], a: &[f64], n: &[f64]) -> f64 {
        let dist = (n[8] * n[8] + n[9] * n[9] + n[10] * n[10]).sqrt();
        -dist - (a[0] * a[0] + a[1] * a[1])
    }

    fn reward_gradient_raw(&self, _s: &[f64], a: &[f64], n: &[f64], d_next: &mut [f64], d_a: &mut [f64]) {
        d_next.fill(0.0);
        let dist = (n[8] * n[8] + n[9] * n[9] + n[10] * n[10]).sqrt();
        if dist > 0.0 {
            for i in 8..11 {
                d_next[i] = -n[i] / dist;
            }
        }
        d_a[0] = -2.0 * a[0];
        d_a[1] = -2.0 * a[1];
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "link_length_1" => self.link_length_1 = value,
            "link_length_2" => self.link_length_2 = value,
            "link_mass_1" => self.link_mass_1 = value,
            "link_mass_2" => self.link_mass_2 = value,
            "gear" => self.gear = value,
            "damping" => self.damping = value,
            "dt" => self.dt = value,
            _ => return Err(unknown_param("reacher2d", key, &self.params())),
        }
        Ok(())
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("link_length_1", self.link_length_1),
            ("link_length_2", self.link_length_2),
            ("link_mass_1", self.link_mass_1),
            ("link_mass_2", self.link_mass_2),
            ("gear", self.gear),
            ("damping", self.damping),
            ("dt", self.dt),
        ]
    }
}
