use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Environment;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::rng::RngStream;
use crate::types::{ActionVec, EnvSpec, StateVec};

/// Episode executor that perturbs executed actions and returned
/// observations with Gaussian white noise.
///
/// The true state is kept internally; rewards and termination are computed
/// on the true transition. With both sigmas zero no random numbers are
/// drawn and every output equals the wrapped environment's.
#[derive(Debug)]
pub struct NoiseWrapper {
    env: Arc<dyn Environment>,
    sigma_o: f64,
    sigma_a: f64,
    rng: ChaCha8Rng,
    true_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyStep {
    pub observation: StateVec,
    pub true_next: StateVec,
    /// Action actually applied: `clamp(a + eps_a)`.
    pub executed: ActionVec,
    pub reward: f64,
    pub terminated: bool,
}

impl NoiseWrapper {
    pub fn new(env: Arc<dyn Environment>, sigma_o: f64, sigma_a: f64, stream: RngStream) -> Result<Self> {
        if !(sigma_o >= 0.0 && sigma_a >= 0.0) {
            return Err(Error::invalid("noise standard deviations must be >= 0"));
        }
        Ok(Self {
            env,
            sigma_o,
            sigma_a,
            rng: stream.rng(),
            true_state: None,
        })
    }

    /// Noise-free executor.
    pub fn clean(env: Arc<dyn Environment>) -> Self {
        Self::new(env, 0.0, 0.0, RngStream::root(0)).expect("zero noise is valid")
    }

    pub fn spec(&self) -> &EnvSpec {
        self.env.spec()
    }

    pub fn env(&self) -> &Arc<dyn Environment> {
        &self.env
    }

    pub fn true_state(&self) -> Option<&[f64]> {
        self.true_state.as_deref()
    }

    /// Starts an episode from a draw of the initial distribution and
    /// returns the (noisy) first observation.
    pub fn reset(&mut self, init: &RngStream) -> StateVec {
        let s = self.env.reset(init).into_inner();
        self.start_from(s)
    }

    /// Starts an episode from a given true state.
    pub fn start_from(&mut self, state: Vec<f64>) -> StateVec {
        let obs = self.observe(&state);
        self.true_state = Some(state);
        obs
    }

    fn observe(&mut self, s: &[f64]) -> StateVec {
        let mut obs = s.to_vec();
        add_noise(&mut obs, self.sigma_o, &mut self.rng);
        StateVec::from_raw(obs)
    }

    pub fn step(&mut self, a: &ActionVec) -> Result<NoisyStep> {
        let spec = self.env.spec();
        check_dim("action", spec.act_dim, a.len())?;
        check_finite("action", a)?;
        let s = self
            .true_state
            .take()
            .ok_or_else(|| Error::invalid("step called before reset"))?;
        let mut act = a.to_vec();
        add_noise(&mut act, self.sigma_a, &mut self.rng);
        spec.clamp_in_place(&mut act);
        let mut next = vec![0.0; spec.obs_dim];
        self.env.step_raw(&s, &act, &mut next);
        check_finite("next state", &next)?;
        let reward = self.env.reward_raw(&s, &act, &next);
        let terminated = self.env.is_terminal(&next);
        let observation = self.observe(&next);
        self.true_state = Some(next.clone());
        Ok(NoisyStep {
            observation,
            true_next: StateVec::from_raw(next),
            executed: ActionVec::from_raw(act),
            reward,
            terminated,
        })
    }
}

fn add_noise(v: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked non-negative");
    for x in v {
        *x += normal.sample(rng);
    }
}
