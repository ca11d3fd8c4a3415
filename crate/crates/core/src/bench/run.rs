use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, ExperimentConfig};
use crate::dynamics::{DynamicsEnsemble, PropagationMode, TransitionDataset};
use crate::envs::{make_env_with, Environment, NoiseWrapper};
use crate::error::{Error, Result};
use crate::par::{map_range, with_workers, Exec};
use crate::planners::{
    collect_extra_steps, mpc_episode_capped, CemController, Controller, IlqgController, Objective, RandomController, RolloutBackend,
    RsController, TerminationScheme,
};
use crate::rng::RngStream;

/// Returns logged by one seed, as `(timestep, episode return)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub points: Vec<(u64, f64)>,
    /// Set when the run stopped early; the points logged so far are kept.
    #[serde(default)]
    pub failed: Option<String>,
}

impl SeedRecord {
    pub fn new(seed: u64, points: Vec<(u64, f64)>) -> Self {
        Self { seed, points, failed: None }
    }

    pub fn is_failed(&self) -> bool {
        self.failed.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid(format!("seed {}: timesteps must be strictly increasing", self.seed)));
        }
        Ok(())
    }
}

/// Output of one experiment: the canonical config, its fingerprint and the
/// per-seed return series. Equality ignores the wall-clock time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub env: String,
    pub algo: Algorithm,
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedRecord>,
    /// Not serialized with the record; see [`super::write_record`].
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl PartialEq for ExperimentRecord {
    fn eq(&self, other: &Self) -> bool {
        self.env == other.env
            && self.algo == other.algo
            && self.fingerprint == other.fingerprint
            && self.config == other.config
            && self.seeds == other.seeds
    }
}

impl ExperimentRecord {
    /// Seeds that completed without error.
    pub fn effective_seeds(&self) -> impl Iterator<Item = &SeedRecord> {
        self.seeds.iter().filter(|s| !s.is_failed())
    }

    pub fn failed_seeds(&self) -> Vec<u64> {
        self.seeds.iter().filter(|s| s.is_failed()).map(|s| s.seed).collect()
    }

    /// Short label used in file names.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.env, self.algo, &self.fingerprint[..12.min(self.fingerprint.len())])
    }
}

/// Stream for seed `index` of an experiment.
pub fn seed_stream(master_seed: u64, index: u64) -> RngStream {
    RngStream::root(master_seed).split(index)
}

/// Runs every seed of `cfg`. Seeds run as independent jobs on a pool of
/// `cfg.experiment.workers` threads. A seed whose run fails (for example,
/// model training diverges) is marked failed and the others continue.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let x = &cfg.experiment;
    let seeds = with_workers(x.workers, || {
        map_range(Exec::Parallel, x.seeds, |i| {
            let mut rec = SeedRecord::new(i as u64, Vec::new());
            if let Err(e) = run_seed(cfg, i as u64, &mut rec.points) {
                rec.failed = Some(e.to_string());
            }
            rec
        })
    });
    let mut canon = cfg.clone();
    canon.experiment.out = None;
    canon.experiment.workers = 0;
    Ok(ExperimentRecord {
        env: x.env.clone(),
        algo: x.algo,
        fingerprint: cfg.fingerprint()?,
        config: canon,
        seeds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn planning_objective(cfg: &ExperimentConfig, backend: RolloutBackend, scheme: TerminationScheme) -> Objective {
    Objective::new(backend).with_scheme(scheme, cfg.termination.alive_bonus)
}

fn controller_for(
    cfg: &ExperimentConfig,
    env: &Arc<dyn Environment>,
    scheme: TerminationScheme,
    model: Option<&Arc<DynamicsEnsemble>>,
) -> Result<Box<dyn Controller>> {
    let algo = cfg.experiment.algo;
    let backend = if algo.learns_dynamics() {
        let Some(ensemble) = model else {
            return Ok(Box::new(RandomController { env: env.clone() }));
        };
        let d = cfg.effective_dynamics();
        RolloutBackend::Learned {
            env: env.clone(),
            ensemble: ensemble.clone(),
            mode: PropagationMode::from_setting(d.propagation, d.particles)?,
        }
    } else {
        RolloutBackend::GroundTruth(env.clone())
    };
    let objective = planning_objective(cfg, backend, scheme);
    Ok(match algo {
        Algorithm::Rs | Algorithm::PetsRs | Algorithm::GtRs => Box::new(RsController {
            objective,
            cfg: cfg.planner.rs.clone(),
        }),
        Algorithm::PetsCem | Algorithm::GtCem => Box::new(CemController::new(objective, cfg.planner.cem.clone())),
        Algorithm::Ilqg => Box::new(IlqgController::new(env.clone(), cfg.planner.ilqg.clone())),
    })
}

/// One seed's training/evaluation loop. Episodes are appended to `points`
/// as they finish so a failure keeps the returns logged before it.
///
/// Ground-truth algorithms plan with the true dynamics from the first
/// episode. Learned-dynamics algorithms collect `warmup_episodes` random
/// episodes, then alternate between refitting the ensemble on all data
/// (continuing from the current parameters) and collecting MPC episodes.
/// An episode cut short by the timestep budget is not logged.
fn run_seed(cfg: &ExperimentConfig, seed: u64, points: &mut Vec<(u64, f64)>) -> Result<()> {
    let x = &cfg.experiment;
    let stream = seed_stream(x.master_seed, seed);
    let env = make_env_with(&x.env, &cfg.env)?;
    let spec = env.spec().clone();
    let scheme = cfg.termination.scheme()?;
    let learned = x.algo.learns_dynamics();
    let dcfg = cfg.effective_dynamics();

    let mut runner = NoiseWrapper::new(env.clone(), cfg.noise.sigma_o, cfg.noise.sigma_a, stream.split_named("noise"))?;
    let episodes = stream.split_named("episode");
    let fits = stream.split_named("fit");
    let mut data = TransitionDataset::new(spec.obs_dim, spec.act_dim);
    let mut model: Option<Arc<DynamicsEnsemble>> = None;
    let mut controller = controller_for(cfg, &env, scheme, None)?;
    let (mut t, mut ep, mut n_fits, mut since_fit) = (0usize, 0u64, 0u64, 0usize);

    while t < x.total_timesteps {
        let ep_stream = episodes.split(ep);
        let traj = mpc_episode_capped(&mut runner, controller.as_mut(), &scheme, &ep_stream, x.total_timesteps - t)?;
        t += traj.len();
        let terminated = traj.transitions.last().is_some_and(|tr| tr.terminated);
        if terminated || traj.len() == spec.horizon {
            points.push((t as u64, traj.rewards().sum()));
        }
        if learned {
            data.extend_from_trajectory(&traj)?;
            since_fit += traj.len();
            if terminated && scheme.extra_steps() > 0 && t < x.total_timesteps {
                let n = scheme.extra_steps().min(x.total_timesteps - t);
                let last = &traj.transitions[traj.len() - 1].next_state;
                for tr in collect_extra_steps(&mut runner, last, n, &ep_stream.split_named("extra"))? {
                    data.push(tr)?;
                }
                t += n;
                since_fit += n;
            }
            let warmed_up = ep + 1 >= x.warmup_episodes as u64;
            if warmed_up && since_fit >= x.retrain_every.max(1) && t < x.total_timesteps {
                let mut ens = match model.take() {
                    Some(m) => Arc::try_unwrap(m).unwrap_or_else(|m| (*m).clone()),
                    None => DynamicsEnsemble::new(spec.obs_dim, spec.act_dim, &dcfg, &stream.split_named("model"))?,
                };
                ens.fit(&data, &dcfg, &fits.split(n_fits))?;
                n_fits += 1;
                since_fit = 0;
                let ens = Arc::new(ens);
                controller = controller_for(cfg, &env, scheme, Some(&ens))?;
                model = Some(ens);
            }
        }
        ep += 1;
    }
    Ok(())
}
