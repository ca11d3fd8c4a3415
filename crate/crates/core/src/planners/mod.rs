//! Shooting planners (random shooting, cross-entropy method), iLQG, the
//! receding-horizon control loop and early-termination handling.

mod backend;
mod cem;
mod ilqg;
mod mpc;
mod rs;
mod termination;

pub use backend::{Objective, RolloutBackend, CHUNK};
pub use cem::{plan_cem, CemConfig, CemPlan};
pub use ilqg::{plan_ilqg, IlqgConfig, IlqgPlan};
pub use mpc::{
    collect_extra_steps, mpc_episode, mpc_episode_capped, CemController, ConstantController, Controller, IlqgController, RandomController, RsController,
};
pub use rs::{plan_rs, RsConfig, RsPlan};
pub use termination::{apply_termination_scheme, SchemeKind, TerminationConfig, TerminationScheme, PENALTY_MULTIPLIERS};

/// Index of the largest finite score; ties go to the lowest index.
/// Non-finite scores never win unless all are non-finite (then 0).
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_finite() && s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Drops the first step of a plan and pads the end with zeros.
pub fn shift_plan(plan: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = plan.iter().skip(1).cloned().collect();
    if let Some(last) = plan.last() {
        out.push(vec![0.0; last.len()]);
    }
    out
}
