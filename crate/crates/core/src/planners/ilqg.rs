use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::rs::uniform_sequences;
use crate::envs::Environment;
use crate::error::{check_dim, Error, Result};
use crate::par::{map_range, Exec};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IlqgConfig {
    pub horizon: usize,
    /// Backward/forward iterations per call.
    pub updates: usize,
    /// Maximum line-search halvings per update.
    pub backtracks: usize,
    /// Optimizations run per call: the warm start plus random restarts.
    pub restarts: usize,
    pub fd_eps: f64,
    pub mu_init: f64,
    pub mu_up: f64,
    pub mu_down: f64,
    pub mu_min: f64,
    pub mu_max: f64,
}

impl Default for IlqgConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            updates: 10,
            backtracks: 10,
            restarts: 10,
            fd_eps: 1e-5,
            mu_init: 1e-6,
            mu_up: 10.0,
            mu_down: 0.5,
            mu_min: 1e-12,
            mu_max: 1e10,
        }
    }
}

impl IlqgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::Config("planner.ilqg horizon must be >= 2".into()));
        }
        if self.backtracks == 0 || self.restarts == 0 || self.updates == 0 {
            return Err(Error::Config("planner.ilqg updates, backtracks and restarts must be >= 1".into()));
        }
        if !(self.fd_eps > 0.0 && self.mu_up > 1.0 && self.mu_down > 0.0 && self.mu_down < 1.0 && self.mu_min >= 0.0 && self.mu_max > self.mu_init) {
            return Err(Error::Config("planner.ilqg regularization settings are inconsistent".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlqgPlan {
    pub actions: Vec<Vec<f64>>,
    /// Nominal states, `horizon + 1` of them starting at `s0`.
    pub states: Vec<Vec<f64>>,
    /// Open-loop corrections from the last backward pass.
    pub feedforward: Vec<DVector<f64>>,
    /// Time-varying feedback gains: `u_t = actions[t] + K_t (x_t - states[t])`.
    pub gains: Vec<DMatrix<f64>>,
    /// Total cost (negative return) of the nominal trajectory.
    pub cost: f64,
    /// Cost of every accepted iterate of the winning restart, starting
    /// with its initial sequence.
    pub cost_history: Vec<f64>,
}

/// Iterative LQG on the environment's own dynamics. Restart 0 starts from
/// `warm_start` (zeros if absent); the others from uniform random sequences.
/// The lowest-cost result wins, earlier restarts on ties.
pub fn plan_ilqg(env: &dyn Environment, s0: &[f64], cfg: &IlqgConfig, warm_start: Option<&[Vec<f64>]>, stream: &RngStream) -> Result<IlqgPlan> {
    plan_ilqg_with(env, s0, cfg, warm_start, stream, Exec::default())
}

pub fn plan_ilqg_with(
    env: &dyn Environment,
    s0: &[f64],
    cfg: &IlqgConfig,
    warm_start: Option<&[Vec<f64>]>,
    stream: &RngStream,
    exec: Exec,
) -> Result<IlqgPlan> {
    cfg.validate()?;
    let spec = env.spec();
    check_dim("planning state", spec.obs_dim, s0.len())?;
    let mut init = vec![vec![0.0; spec.act_dim]; cfg.horizon];
    if let Some(w) = warm_start {
        for (t, a) in w.iter().take(cfg.horizon).enumerate() {
            check_dim("warm start action", spec.act_dim, a.len())?;
            init[t].copy_from_slice(a);
        }
    }
    let results = map_range(exec, cfg.restarts, |r| {
        let start = if r == 0 {
            init.clone()
        } else {
            uniform_sequences(spec, 1, cfg.horizon, &stream.split(r as u64)).remove(0)
        };
        optimize(env, s0, start, cfg)
    });
    let mut best: Option<IlqgPlan> = None;
    for r in results {
        let plan = r?;
        if best.as_ref().is_none_or(|b| plan.cost < b.cost) {
            best = Some(plan);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn rollout(env: &dyn Environment, s0: &[f64], actions: &mut [Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let spec = env.spec();
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(s0.to_vec());
    let mut cost = 0.0;
    for a in actions.iter_mut() {
        spec.clamp_in_place(a);
        let s = states.last().unwrap();
        let mut next = vec![0.0; spec.obs_dim];
        env.step_raw(s, a, &mut next);
        cost -= env.reward_raw(s, a, &next);
        states.push(next);
    }
    (states, if cost.is_finite() { cost } else { f64::INFINITY })
}

struct Linearization {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    /// Cost gradient and Hessian in `(next_state, action)`.
    g: Vec<DVector<f64>>,
    h: Vec<DMatrix<f64>>,
}

fn linearize(env: &dyn Environment, states: &[Vec<f64>], actions: &[Vec<f64>], eps: f64) -> Linearization {
    let n = env.spec().obs_dim;
    let m = env.spec().act_dim;
    let horizon = actions.len();
    let mut lin = Linearization {
        a: Vec::with_capacity(horizon),
        b: Vec::with_capacity(horizon),
        g: Vec::with_capacity(horizon),
        h: Vec::with_capacity(horizon),
    };
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for t in 0..horizon {
        let (x, u, next) = (&states[t], &actions[t], &states[t + 1]);
        let mut a = DMatrix::zeros(n, n);
        let mut xp = x.clone();
        for j in 0..n {
            xp[j] = x[j] + eps;
            env.step_raw(&xp, u, &mut plus);
            xp[j] = x[j] - eps;
            env.step_raw(&xp, u, &mut minus);
            xp[j] = x[j];
            for i in 0..n {
                a[(i, j)] = (plus[i] - minus[i]) / (2.0 * eps);
            }
        }
        let mut b = DMatrix::zeros(n, m);
        let mut up = u.clone();
        for j in 0..m {
            up[j] = u[j] + eps;
            env.step_raw(x, &up, &mut plus);
            up[j] = u[j] - eps;
            env.step_raw(x, &up, &mut minus);
            up[j] = u[j];
            for i in 0..n {
                b[(i, j)] = (plus[i] - minus[i]) / (2.0 * eps);
            }
        }
        let g = cost_gradient(env, x, u, next);
        let mut h = DMatrix::zeros(n + m, n + m);
        let mut np = next.clone();
        let mut ap = u.clone();
        for j in 0..n + m {
            let (gp, gm) = if j < n {
                np[j] = next[j] + eps;
                let gp = cost_gradient(env, x, u, &np);
                np[j] = next[j] - eps;
                let gm = cost_gradient(env, x, u, &np);
                np[j] = next[j];
                (gp, gm)
            } else {
                let k = j - n;
                ap[k] = u[k] + eps;
                let gp = cost_gradient(env, x, &ap, next);
                ap[k] = u[k] - eps;
                let gm = cost_gradient(env, x, &ap, next);
                ap[k] = u[k];
                (gp, gm)
            };
            h.set_column(j, &((gp - gm) / (2.0 * eps)));
        }
        let h = (&h + h.transpose()) * 0.5;
        lin.a.push(a);
        lin.b.push(b);
        lin.g.push(g);
        lin.h.push(h);
    }
    lin
}

/// Gradient of `-reward` in `(next_state, action)`.
fn cost_gradient(env: &dyn Environment, s: &[f64], a: &[f64], next: &[f64]) -> DVector<f64> {
    let n = next.len();
    let m = a.len();
    let mut dn = vec![0.0; n];
    let mut da = vec![0.0; m];
    env.reward_gradient_raw(s, a, next, &mut dn, &mut da);
    DVector::from_iterator(n + m, dn.into_iter().chain(da).map(|v| -v))
}

struct Gains {
    k: Vec<DVector<f64>>,
    big_k: Vec<DMatrix<f64>>,
}

/// Regularized backward pass. `None` when some `Q_uu` is not positive
/// definite at this regularization.
fn backward(lin: &Linearization, n: usize, m: usize, mu: f64) -> Option<Gains> {
    let horizon = lin.a.len();
    let mut vx = DVector::zeros(n);
    let mut vxx = DMatrix::zeros(n, n);
    let mut k = vec![DVector::zeros(m); horizon];
    let mut big_k = vec![DMatrix::zeros(m, n); horizon];
    for t in (0..horizon).rev() {
        let (a, b, g, h) = (&lin.a[t], &lin.b[t], &lin.g[t], &lin.h[t]);
        let lx = g.rows(0, n);
        let lu = g.rows(n, m);
        let lxx = h.view((0, 0), (n, n));
        let lux = h.view((n, 0), (m, n));
        let luu = h.view((n, n), (m, m));
        let vx_t = &vx + lx;
        let vxx_t = &vxx + lxx;
        let vxx_reg = &vxx_t + DMatrix::identity(n, n) * mu;
        let lux_b = lux * b;
        let qx = a.transpose() * &vx_t;
        let qu = lu + b.transpose() * &vx_t;
        let qxx = a.transpose() * &vxx_t * a;
        let quu = luu + b.transpose() * &vxx_t * b + &lux_b + lux_b.transpose();
        let qux = b.transpose() * &vxx_t * a + lux * a;
        let quu_reg = luu + b.transpose() * &vxx_reg * b + &lux_b + lux_b.transpose();
        let qux_reg = b.transpose() * &vxx_reg * a + lux * a;
        let quu_reg = (&quu_reg + quu_reg.transpose()) * 0.5;
        let chol = quu_reg.cholesky()?;
        let kt = -chol.solve(&qu);
        let big_kt = -chol.solve(&qux_reg);
        vx = &qx + big_kt.transpose() * &quu * &kt + big_kt.transpose() * &qu + qux.transpose() * &kt;
        let v = &qxx + big_kt.transpose() * &quu * &big_kt + big_kt.transpose() * &qux + qux.transpose() * &big_kt;
        vxx = (&v + v.transpose()) * 0.5;
        k[t] = kt;
        big_k[t] = big_kt;
    }
    Some(Gains { k, big_k })
}

fn optimize(env: &dyn Environment, s0: &[f64], mut actions: Vec<Vec<f64>>, cfg: &IlqgConfig) -> Result<IlqgPlan> {
    let spec = env.spec();
    let (n, m) = (spec.obs_dim, spec.act_dim);
    let (mut states, mut cost) = rollout(env, s0, &mut actions);
    let mut history = vec![cost];
    let mut mu = cfg.mu_init;
    let mut gains: Option<Gains> = None;
    'updates: for _ in 0..cfg.updates {
        let lin = linearize(env, &states, &actions, cfg.fd_eps);
        let g = loop {
            if let Some(g) = backward(&lin, n, m, mu) {
                break g;
            }
            mu = (mu * cfg.mu_up).max(cfg.mu_init);
            if mu > cfg.mu_max {
                break 'updates;
            }
        };
        // Converged: no descent direction left.
        let scale = 1.0 + actions.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if g.k.iter().all(|k| k.amax() <= 1e-10 * scale) {
            gains = Some(g);
            break;
        }
        let mut accepted = false;
        let mut alpha = 1.0;
        for _ in 0..cfg.backtracks {
            let mut trial = Vec::with_capacity(actions.len());
            let mut x = s0.to_vec();
            let mut trial_states = vec![x.clone()];
            let mut trial_cost = 0.0;
            for t in 0..actions.len() {
                let dx = DVector::from_iterator(n, x.iter().zip(&states[t]).map(|(a, b)| a - b));
                let du = &g.k[t] * alpha + &g.big_k[t] * dx;
                let mut u: Vec<f64> = actions[t].iter().zip(du.iter()).map(|(a, d)| a + d).collect();
                spec.clamp_in_place(&mut u);
                let mut next = vec![0.0; n];
                env.step_raw(&x, &u, &mut next);
                trial_cost -= env.reward_raw(&x, &u, &next);
                trial.push(u);
                trial_states.push(next.clone());
                x = next;
            }
            if trial_cost.is_finite() && trial_cost < cost {
                actions = trial;
                states = trial_states;
                cost = trial_cost;
                history.push(cost);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        gains = Some(g);
        if accepted {
            mu = (mu * cfg.mu_down).max(cfg.mu_min);
        } else {
            mu *= cfg.mu_up;
            if mu > cfg.mu_max {
                break;
            }
        }
    }
    // Gains consistent with the final nominal trajectory.
    let lin = linearize(env, &states, &actions, cfg.fd_eps);
    let mut final_mu = cfg.mu_min;
    while final_mu <= cfg.mu_max {
        if let Some(g) = backward(&lin, n, m, final_mu) {
            gains = Some(g);
            break;
        }
        final_mu = (final_mu * cfg.mu_up).max(f64::MIN_POSITIVE);
    }
    let gains = gains.unwrap_or_else(|| Gains {
        k: vec![DVector::zeros(m); actions.len()],
        big_k: vec![DMatrix::zeros(m, n); actions.len()],
    });
    Ok(IlqgPlan {
        actions,
        states,
        feedforward: gains.k,
        gains: gains.big_k,
        cost,
        cost_history: history,
    })
}
