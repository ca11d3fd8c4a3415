#![allow(dead_code)]

use mbrl_core::envs::{Environment, LinearQuadratic};
use mbrl_core::{EnvSpec, InitDistribution, RngStream};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

type StepFn = fn(&[f64], &[f64], &mut [f64]);
type RewardFn = fn(&[f64], &[f64], &[f64]) -> f64;

/// Environment assembled from plain functions; the reward gradient is
/// taken by central differences.
#[derive(Debug, Clone)]
pub struct FnEnv {
    pub spec: EnvSpec,
    pub step: StepFn,
    pub reward: RewardFn,
}

impl FnEnv {
    pub fn new(obs_dim: usize, act_dim: usize, low: f64, high: f64, step: StepFn, reward: RewardFn) -> Self {
        Self {
            spec: EnvSpec {
                name: "toy".into(),
                obs_dim,
                act_dim,
                horizon: 10,
                action_low: vec![low; act_dim],
                action_high: vec![high; act_dim],
                has_termination: false,
                init_distribution: InitDistribution::Uniform {
                    low: vec![0.0; obs_dim],
                    high: vec![0.0; obs_dim],
                },
                gamma: 1.0,
            },
            step,
            reward,
        }
    }
}

impl Environment for FnEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn spec_mut(&mut self) -> &mut EnvSpec {
        &mut self.spec
    }
    fn observe(&self, coords: &[f64]) -> Vec<f64> {
        coords.to_vec()
    }
    fn step_raw(&self, s: &[f64], a: &[f64], next: &mut [f64]) {
        (self.step)(s, a, next)
    }
    fn reward_raw(&self, s: &[f64], a: &[f64], next: &[f64]) -> f64 {
        (self.reward)(s, a, next)
    }
    fn reward_gradient_raw(&self, s: &[f64], a: &[f64], next: &[f64], d_next: &mut [f64], d_a: &mut [f64]) {
        let h = 1e-6;
        let mut n = next.to_vec();
        for i in 0..n.len() {
            n[i] = next[i] + h;
            let p = (self.reward)(s, a, &n);
            n[i] = next[i] - h;
            let m = (self.reward)(s, a, &n);
            n[i] = next[i];
            d_next[i] = (p - m) / (2.0 * h);
        }
        let mut u = a.to_vec();
        for i in 0..u.len() {
            u[i] = a[i] + h;
            let p = (self.reward)(s, &u, next);
            u[i] = a[i] - h;
            let m = (self.reward)(s, &u, next);
            u[i] = a[i];
            d_a[i] = (p - m) / (2.0 * h);
        }
    }
    fn set_param(&mut self, key: &str, _value: f64) -> mbrl_core::Result<()> {
        Err(mbrl_core::Error::Config(key.into()))
    }
    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![]
    }
}

/// Optimal cost of `sum_t x_{t+1}^T Q x_{t+1} + u_t^T R u_t` over `horizon`
/// steps from `x0`, by the backward Riccati recursion. Also returns the
/// time-varying optimal gains (`u_t = -K_t x_t`).
pub fn riccati(lqr: &LinearQuadratic, x0: &[f64], horizon: usize) -> (f64, Vec<DMatrix<f64>>) {
    let (a, b, q, r) = (&lqr.a, &lqr.b, &lqr.q, &lqr.r);
    let n = a.nrows();
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut gains = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let s = q + &p;
        let k = (r + b.transpose() * &s * b).try_inverse().expect("invertible") * b.transpose() * &s * a;
        p = a.transpose() * &s * (a - b * &k);
        p = (&p + p.transpose()) * 0.5;
        gains.push(k);
    }
    gains.reverse();
    let x = DVector::from_column_slice(x0);
    ((x.transpose() * p * &x)[(0, 0)], gains)
}

/// Random stabilizable instance with `n` states and `m` inputs.
pub fn random_lqr(n: usize, m: usize, horizon: usize, stream: &RngStream) -> LinearQuadratic {
    let mut rng = stream.rng();
    let mut normal = |rows, cols, scale: f64| DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let a = DMatrix::identity(n, n) + normal(n, n, 0.3);
    let b = normal(n, m, 1.0);
    let mq = normal(n, n, 1.0);
    let mr = normal(m, m, 1.0);
    let q = mq.transpose() * mq + DMatrix::identity(n, n) * 0.1;
    let r = mr.transpose() * mr + DMatrix::identity(m, m) * 0.1;
    LinearQuadratic::new(a, b, q, r, horizon).unwrap()
}

pub fn random_point(n: usize, stream: &RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}
