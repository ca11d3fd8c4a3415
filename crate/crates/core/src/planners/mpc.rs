use std::sync::Arc;

use super::rs::uniform_sequences;
use super::{plan_cem, plan_ilqg, plan_rs, shift_plan, CemConfig, IlqgConfig, Objective, RsConfig, TerminationScheme};
use crate::envs::{Environment, NoiseWrapper};
use crate::error::Result;
use crate::rng::RngStream;
use crate::types::{ActionVec, Trajectory, Transition};

/// Chooses one action per observation. Implementations may keep
/// warm-start state between calls within an episode.
pub trait Controller: Send {
    fn reset(&mut self) {}

    fn act(&mut self, obs: &[f64], stream: &RngStream) -> Result<Vec<f64>>;
}

/// Always returns the same action.
#[derive(Debug, Clone)]
pub struct ConstantController(pub Vec<f64>);

impl Controller for ConstantController {
    fn act(&mut self, _obs: &[f64], _stream: &RngStream) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

/// Uniform random actions within the bounds.
#[derive(Debug, Clone)]
pub struct RandomController {
    pub env: Arc<dyn Environment>,
}

impl Controller for RandomController {
    fn act(&mut self, _obs: &[f64], stream: &RngStream) -> Result<Vec<f64>> {
        Ok(uniform_sequences(self.env.spec(), 1, 1, stream).remove(0).remove(0))
    }
}

#[derive(Debug, Clone)]
pub struct RsController {
    pub objective: Objective,
    pub cfg: RsConfig,
}

impl Controller for RsController {
    fn act(&mut self, obs: &[f64], stream: &RngStream) -> Result<Vec<f64>> {
        Ok(plan_rs(&self.objective, obs, &self.cfg, stream)?.actions.swap_remove(0))
    }
}

#[derive(Debug, Clone)]
pub struct CemController {
    pub objective: Objective,
    pub cfg: CemConfig,
    warm: Option<Vec<Vec<f64>>>,
}

impl CemController {
    pub fn new(objective: Objective, cfg: CemConfig) -> Self {
        Self {
            objective,
            cfg,
            warm: None,
        }
    }
}

impl Controller for CemController {
    fn reset(&mut self) {
        self.warm = None;
    }

    fn act(&mut self, obs: &[f64], stream: &RngStream) -> Result<Vec<f64>> {
        let plan = plan_cem(&self.objective, obs, &self.cfg, self.warm.as_deref(), stream)?;
        self.warm = Some(shift_plan(&plan.mean));
        Ok(plan.mean[0].clone())
    }
}

#[derive(Debug, Clone)]
pub struct IlqgController {
    pub env: Arc<dyn Environment>,
    pub cfg: IlqgConfig,
    warm: Option<Vec<Vec<f64>>>,
}

impl IlqgController {
    pub fn new(env: Arc<dyn Environment>, cfg: IlqgConfig) -> Self {
        Self { env, cfg, warm: None }
    }
}

impl Controller for IlqgController {
    fn reset(&mut self) {
        self.warm = None;
    }

    fn act(&mut self, obs: &[f64], stream: &RngStream) -> Result<Vec<f64>> {
        let plan = plan_ilqg(self.env.as_ref(), obs, &self.cfg, self.warm.as_deref(), stream)?;
        self.warm = Some(shift_plan(&plan.actions));
        Ok(plan.actions[0].clone())
    }
}

/// Runs one receding-horizon episode: plan from the current observation,
/// execute the first action, repeat until the horizon or, unless the scheme
/// says otherwise, a terminal state.
///
/// The episode's initial state comes from `stream.split_named("init")`; the
/// plan at step `t` uses `stream.split_named("plan").split(t)`.
pub fn mpc_episode(env: &mut NoiseWrapper, controller: &mut dyn Controller, scheme: &TerminationScheme, stream: &RngStream) -> Result<Trajectory> {
    let horizon = env.spec().horizon;
    mpc_episode_capped(env, controller, scheme, stream, horizon)
}

/// [`mpc_episode`] stopped after at most `max_steps` steps.
pub fn mpc_episode_capped(
    env: &mut NoiseWrapper,
    controller: &mut dyn Controller,
    scheme: &TerminationScheme,
    stream: &RngStream,
    max_steps: usize,
) -> Result<Trajectory> {
    let spec = env.spec().clone();
    let plan_stream = stream.split_named("plan");
    let mut obs = env.reset(&stream.split_named("init"));
    controller.reset();
    let mut traj = Trajectory::default();
    for t in 0..spec.horizon.min(max_steps) {
        let mut a = controller.act(&obs, &plan_stream.split(t as u64))?;
        spec.clamp_in_place(&mut a);
        let action = ActionVec::new(a)?;
        let step = env.step(&action)?;
        let terminated = step.terminated && scheme.env_terminates();
        traj.transitions.push(Transition {
            state: obs,
            action,
            next_state: step.observation.clone(),
            reward: step.reward,
            terminated,
        });
        obs = step.observation;
        if terminated {
            break;
        }
    }
    Ok(traj)
}

/// Continues an episode that just terminated with `steps` random actions.
/// The transitions are model training data only; they do not count toward
/// any episode return.
pub fn collect_extra_steps(env: &mut NoiseWrapper, last_obs: &[f64], steps: usize, stream: &RngStream) -> Result<Vec<Transition>> {
    let spec = env.spec().clone();
    let actions = uniform_sequences(&spec, 1, steps, stream).remove(0);
    let mut obs = crate::types::StateVec::new(last_obs.to_vec())?;
    let mut out = Vec::with_capacity(steps);
    for a in actions {
        let action = ActionVec::new(a)?;
        let step = env.step(&action)?;
        out.push(Transition {
            state: obs,
            action,
            next_state: step.observation.clone(),
            reward: step.reward,
            terminated: false,
        });
        obs = step.observation;
    }
    Ok(out)
}
