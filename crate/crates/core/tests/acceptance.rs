//! End-to-end acceptance checks. Each test prints one `criterion N PASS|FAIL`
//! line with the measured value before asserting.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;

use common::{random_lqr, random_point, riccati};
use mbrl_core::bench::*;
use mbrl_core::config::{Algorithm, ExperimentConfig};
use mbrl_core::dynamics::{train_probabilistic, ModelKind, TransitionDataset};
use mbrl_core::envs::{make_env, Environment, NoiseWrapper, ENV_NAMES};
use mbrl_core::net::loss::{gaussian_nll, mse, LogVarBounds};
use mbrl_core::net::{Activation, Mlp};
use mbrl_core::planners::*;
use mbrl_core::{ActionVec, RngStream, StateVec, Transition};
use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

/// Written to the stderr handle directly so the line survives output capture.
fn verdict(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2} {}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n}: {detail}");
}

fn gt_config(env: &str, algo: Algorithm, episodes: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(env, algo);
    cfg.experiment.seeds = 4;
    cfg.experiment.total_timesteps = episodes * 200;
    cfg
}

fn score(rec: &ExperimentRecord) -> ScoreSummary {
    assert!(rec.failed_seeds().is_empty(), "failed seeds: {:?}", rec.seeds);
    record_score(rec).unwrap()
}

#[test]
fn c01_gt_cem_cartpole() {
    let mut cfg = gt_config("cartpole", Algorithm::GtCem, 5);
    cfg.planner.cem = CemConfig {
        population: 200,
        elite: 20,
        iterations: 3,
        horizon: 30,
        ..CemConfig::default()
    };
    let s = score(&run_experiment(&cfg).unwrap());
    verdict(1, s.mean >= 199.0 && s.n_returns == 20, &format!("GT-CEM CartPole {s} over {} episodes (need >= 199)", s.n_returns));
}

#[test]
fn c02_gt_rs_pendulum() {
    let mut cfg = gt_config("pendulum", Algorithm::GtRs, 25);
    cfg.planner.rs = RsConfig {
        population: 1000,
        horizon: 30,
    };
    let s = score(&run_experiment(&cfg).unwrap());
    let pass = (s.mean - 171.5).abs() <= 31.8;
    verdict(2, pass, &format!("GT-RS Pendulum {s} (need 171.5 +/- 31.8)"));
}

#[test]
fn c03_gt_rs_cartpole() {
    let mut cfg = gt_config("cartpole", Algorithm::GtRs, 2);
    cfg.planner.rs = RsConfig {
        population: 1000,
        horizon: 30,
    };
    let s = score(&run_experiment(&cfg).unwrap());
    verdict(3, s.mean >= 198.0, &format!("GT-RS CartPole {s} (need >= 198)"));
}

fn learned_config(algo: Algorithm) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("cartpole", algo);
    cfg.experiment.seeds = 4;
    cfg.experiment.total_timesteps = 20_000;
    cfg.dynamics.hidden = vec![32, 32];
    cfg.dynamics.epochs = 5;
    cfg.dynamics.batch_size = 64;
    cfg
}

fn pets_cem_config() -> ExperimentConfig {
    let mut cfg = learned_config(Algorithm::PetsCem);
    cfg.dynamics.members = 5;
    cfg.dynamics.propagation = mbrl_core::dynamics::PropagationKind::E;
    cfg.planner.cem = CemConfig {
        population: 100,
        elite: 10,
        iterations: 3,
        horizon: 10,
        ..CemConfig::default()
    };
    cfg
}

fn rs_config() -> ExperimentConfig {
    let mut cfg = learned_config(Algorithm::Rs);
    cfg.dynamics.members = 1;
    cfg.planner.rs = RsConfig {
        population: 200,
        horizon: 15,
    };
    cfg
}

fn rs_baseline() -> &'static ExperimentRecord {
    static BASELINE: OnceLock<ExperimentRecord> = OnceLock::new();
    BASELINE.get_or_init(|| run_experiment(&rs_config()).unwrap())
}

#[test]
fn c04_pets_cem_cartpole() {
    let cfg = pets_cem_config();
    assert_eq!(cfg.effective_dynamics().kind, ModelKind::Probabilistic);
    let rec = run_experiment(&cfg).unwrap();
    let s = score(&rec);
    verdict(
        4,
        s.mean >= 180.0,
        &format!("PETS-CEM (K=5, E) CartPole final score {s} over the last {} steps, {:.0} s (need >= 180)", s.window, rec.wall_clock_seconds),
    );
}

#[test]
fn c05_rs_learned_cartpole() {
    let rec = rs_baseline();
    let s = score(rec);
    verdict(
        5,
        s.mean >= 180.0,
        &format!("RS + deterministic model CartPole final score {s}, {:.0} s (need >= 180)", rec.wall_clock_seconds),
    );
}

#[test]
fn c06_noise_robustness() {
    let base = rs_baseline();
    let mut noisy_cfg = rs_config();
    noisy_cfg.noise.sigma_o = 0.1;
    let noisy = run_experiment(&noisy_cfg).unwrap();
    let mut control_cfg = rs_config();
    control_cfg.noise.sigma_o = 0.0;
    control_cfg.noise.sigma_a = 0.0;
    let control = run_experiment(&control_cfg).unwrap();
    let (b, n) = (score(base), score(&noisy));
    let drop = b.mean - n.mean;
    let identical = control == *base;
    verdict(
        6,
        drop <= 15.0 && identical,
        &format!("RS CartPole noise-free {b}, sigma_o=0.1 {n}, drop {drop:.1} (need <= 15); sigma=0 control identical: {identical}"),
    );
}

#[test]
fn c07_planning_horizon() {
    let mut cfg = gt_config("pendulum", Algorithm::GtCem, 25);
    cfg.planner.cem = CemConfig {
        population: 30,
        elite: 3,
        iterations: 1,
        ..CemConfig::default()
    };
    let rows = horizon_sweep(&cfg, &[10, 20, 30, 50, 100]).unwrap();
    let best = rows.iter().max_by(|a, b| a.summary.mean.total_cmp(&b.summary.mean)).unwrap();
    let h100 = rows.iter().find(|r| r.horizon == 100).unwrap();
    let table: Vec<String> = rows.iter().map(|r| format!("H{}={:.1}", r.horizon, r.summary.mean)).collect();
    verdict(
        7,
        best.horizon <= 40 && h100.summary.mean < best.summary.mean,
        &format!("GT-CEM Pendulum horizon sweep [{}], best H={}", table.join(", "), best.horizon),
    );
}

#[test]
fn c08_ilqg_matches_riccati() {
    let mut worst: f64 = 0.0;
    for i in 0..5u64 {
        let n = 1 + (i as usize) % 4;
        let m = 1 + (i as usize) % 2;
        let stream = RngStream::root(900 + i);
        let lqr = random_lqr(n, m, 20, &stream);
        let x0 = random_point(n, &stream.split(1));
        let cfg = IlqgConfig {
            horizon: 20,
            restarts: 1,
            ..IlqgConfig::default()
        };
        let plan = plan_ilqg(&lqr, &x0, &cfg, None, &RngStream::root(i)).unwrap();
        let (oracle, _) = riccati(&lqr, &x0, 20);
        worst = worst.max((plan.cost - oracle).abs() / oracle.abs());
    }
    verdict(8, worst <= 1e-6, &format!("iLQG vs Riccati on 5 LQR instances, worst relative cost error {worst:.2e} (need <= 1e-6)"));
}

fn net_gradient_error(seed: u64) -> f64 {
    let mut rng = RngStream::root(seed).rng();
    let act = Activation::ALL[rng.random_range(0..Activation::ALL.len())];
    let depth = rng.random_range(0..3);
    let in_dim = rng.random_range(1..5);
    let out_dim = rng.random_range(1..4);
    let gaussian = rng.random_bool(0.5);
    let mut sizes = vec![in_dim];
    sizes.extend((0..depth).map(|_| rng.random_range(2..9)));
    sizes.push(if gaussian { 2 * out_dim } else { out_dim });
    let n_params = Mlp::zeros(&sizes, act).unwrap().num_params();
    let params = (0..n_params).map(|_| 0.7 * rng.sample::<f64, _>(StandardNormal)).collect();
    let net = Mlp::from_params(&sizes, act, params).unwrap();
    let rows = rng.random_range(1..6);
    let x = Array2::from_shape_fn((rows, in_dim), |_| rng.random_range(-1.5..1.5));
    let y = Array2::from_shape_fn((rows, out_dim), |_| rng.random_range(-1.0..1.0));
    let bounds = LogVarBounds::new(out_dim, -3.0, 0.5);
    let loss = |o: &Array2<f64>| {
        if gaussian {
            let (l, d, _, _) = gaussian_nll(o, y.view(), &bounds);
            (l, d)
        } else {
            mse(o, y.view())
        }
    };
    let (_, g) = net.grad(x.view(), loss).unwrap();
    let h = 1e-6;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..net.num_params() {
        let mut p = net.clone();
        p.params_mut()[i] += h;
        let fp = loss(&p.forward_batch(x.view())).0;
        p.params_mut()[i] -= 2.0 * h;
        let fm = loss(&p.forward_batch(x.view())).0;
        let fd = (fp - fm) / (2.0 * h);
        num = num.max((fd - g[i]).abs());
        den = den.max(fd.abs()).max(g[i].abs());
    }
    num / den.max(1e-8)
}

fn reward_gradient_error(env: &dyn Environment, stream: &RngStream) -> f64 {
    let spec = env.spec();
    let mut rng = stream.rng();
    let s0 = env.reset(&stream.split(1));
    let s = s0.to_vec();
    let a: Vec<f64> = (0..spec.act_dim).map(|i| rng.random_range(spec.action_low[i]..spec.action_high[i])).collect();
    let mut next = vec![0.0; spec.obs_dim];
    env.step_raw(&s, &a, &mut next);
    let (gn, ga) = env.reward_gradient(&s0, &ActionVec::new(a.clone()).unwrap(), &StateVec::new(next.clone()).unwrap());
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, fp: f64, fm: f64| {
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1.0));
    };
    for i in 0..next.len() {
        let (mut p, mut m) = (next.clone(), next.clone());
        p[i] += h;
        m[i] -= h;
        check(gn[i], env.reward_raw(&s, &a, &p), env.reward_raw(&s, &a, &m));
    }
    for i in 0..a.len() {
        let (mut p, mut m) = (a.clone(), a.clone());
        p[i] += h;
        m[i] -= h;
        check(ga[i], env.reward_raw(&s, &p, &next), env.reward_raw(&s, &m, &next));
    }
    worst
}

#[test]
fn c09_gradient_suites() {
    let net_worst = (0..50).map(net_gradient_error).fold(0.0, f64::max);
    let mut env_worst: f64 = 0.0;
    for (e, name) in ENV_NAMES.iter().enumerate() {
        let env = make_env(name).unwrap();
        for k in 0..100 {
            env_worst = env_worst.max(reward_gradient_error(env.as_ref(), &RngStream::root(e as u64).split(k)));
        }
    }
    verdict(
        9,
        net_worst < 1e-4 && env_worst < 1e-5,
        &format!("net gradients worst rel. err {net_worst:.1e} (need < 1e-4); reward gradients of {} envs worst rel. err {env_worst:.1e} (need < 1e-5)", ENV_NAMES.len()),
    );
}

fn termination_objective(scheme: TerminationScheme) -> Objective {
    let env = make_env("cartpole_et").unwrap();
    Objective::new(RolloutBackend::GroundTruth(env.into())).with_scheme(scheme, 1.0)
}

fn weak_cem() -> CemConfig {
    CemConfig {
        population: 5,
        elite: 1,
        iterations: 1,
        horizon: 100,
        ..CemConfig::default()
    }
}

#[test]
fn c10_termination_schemes() {
    let env: std::sync::Arc<dyn Environment> = make_env("cartpole_et").unwrap().into();
    let mut lengths = BTreeMap::new();
    for scheme in [TerminationScheme::C, TerminationScheme::D] {
        let mut total = 0usize;
        for seed in 0..4u64 {
            let mut runner = NoiseWrapper::clean(env.clone());
            let mut ctl = CemController::new(termination_objective(scheme), weak_cem());
            for ep in 0..10u64 {
                total += mpc_episode(&mut runner, &mut ctl, &scheme, &RngStream::root(seed).split(ep)).unwrap().len();
            }
        }
        lengths.insert(scheme.letter(), total as f64 / 40.0);
    }

    let mut identical = true;
    for seed in 0..4u64 {
        let stream = RngStream::root(50 + seed);
        let run = |scheme: TerminationScheme| {
            let mut runner = NoiseWrapper::clean(env.clone());
            let mut ctl = CemController::new(termination_objective(scheme), weak_cem());
            let traj = mpc_episode(&mut runner, &mut ctl, &scheme, &stream).unwrap();
            traj.actions().map(|a| a.to_vec()).collect::<Vec<_>>()
        };
        let (a, d) = (run(TerminationScheme::A), run(TerminationScheme::D));
        identical &= d.len() <= a.len() && a[..d.len()] == d[..];
    }
    let (c, d) = (lengths["C"], lengths["D"]);
    verdict(
        10,
        c > d && identical,
        &format!("CartPole-ET GT-CEM mean episode length C {c:.1} vs D {d:.1} (need C > D); A/D action prefixes identical: {identical}"),
    );
}

#[test]
fn c11_calibration() {
    let mut rng = RngStream::root(1100).rng();
    let mut data = TransitionDataset::new(1, 1);
    let push = |data: &mut TransitionDataset, rng: &mut rand_chacha::ChaCha8Rng| {
        let s: f64 = rng.random_range(-1.0..1.0);
        let a: f64 = rng.random_range(-1.0..1.0);
        let eps: f64 = 0.1 * rng.sample::<f64, _>(StandardNormal);
        data.push(Transition {
            state: StateVec::new(vec![s]).unwrap(),
            action: ActionVec::new(vec![a]).unwrap(),
            next_state: StateVec::new(vec![s + eps]).unwrap(),
            reward: 0.0,
            terminated: false,
        })
        .unwrap();
    };
    for _ in 0..4000 {
        push(&mut data, &mut rng);
    }
    let mut cfg = mbrl_core::dynamics::DynamicsConfig {
        members: 1,
        hidden: vec![32, 32],
        epochs: 30,
        batch_size: 128,
        ..Default::default()
    };
    cfg.kind = ModelKind::Probabilistic;
    let (ens, _) = train_probabilistic(&data, &cfg, &RngStream::root(1101)).unwrap();
    let mut holdout = TransitionDataset::new(1, 1);
    for _ in 0..200 {
        push(&mut holdout, &mut rng);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in holdout.transitions() {
        let (_, var) = ens.predict(0, &t.state, &t.action).unwrap();
        lo = lo.min(var[0].sqrt());
        hi = hi.max(var[0].sqrt());
    }
    verdict(11, lo >= 0.08 && hi <= 0.12, &format!("predicted std on 200 holdout points in [{lo:.4}, {hi:.4}] (need within [0.08, 0.12])"));
}

fn protocol_config(master_seed: u64, workers: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("cartpole", Algorithm::PetsCem);
    cfg.experiment.total_timesteps = 400;
    cfg.experiment.seeds = 3;
    cfg.experiment.master_seed = master_seed;
    cfg.experiment.workers = workers;
    cfg.planner.cem = CemConfig {
        population: 20,
        elite: 4,
        iterations: 2,
        horizon: 5,
        ..CemConfig::default()
    };
    cfg.dynamics.hidden = vec![8];
    cfg.dynamics.members = 2;
    cfg.dynamics.epochs = 2;
    cfg
}

fn emitted_bytes(cfg: &ExperimentConfig) -> BTreeMap<String, Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let rec = run_experiment(cfg).unwrap();
    write_record(dir.path(), &rec).unwrap();
    for f in ReportFormat::ALL {
        emit_report(&[rec.clone()], f, dir.path()).unwrap();
    }
    std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.file_name().unwrap().to_string_lossy().starts_with("timing-"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().to_string(), std::fs::read(&p).unwrap()))
        .collect()
}

fn seed_series() -> impl Strategy<Value = Vec<SeedRecord>> {
    prop::collection::vec(prop::collection::vec((1u64..400, -300.0f64..300.0), 1..10), 1..5).prop_map(|seeds| {
        seeds
            .into_iter()
            .enumerate()
            .map(|(i, steps)| {
                let mut t = 0;
                SeedRecord::new(
                    i as u64,
                    steps
                        .into_iter()
                        .map(|(dt, r)| {
                            t += dt;
                            (t, r)
                        })
                        .collect(),
                )
            })
            .collect()
    })
}

#[test]
fn c12_protocol_invariants() {
    let mut failures = Vec::new();

    let mut runner = TestRunner::new(PropConfig {
        cases: 3,
        ..PropConfig::default()
    });
    let determinism = runner.run(&(0u64..1000), |seed| {
        let one = emitted_bytes(&protocol_config(seed, 1));
        let eight = emitted_bytes(&protocol_config(seed, 8));
        prop_assert_eq!(one.len(), 5);
        prop_assert_eq!(one, eight);
        Ok(())
    });
    if let Err(e) = determinism {
        failures.push(format!("determinism: {e}"));
    }

    let mut runner = TestRunner::new(PropConfig {
        cases: 256,
        ..PropConfig::default()
    });
    let window = runner.run(&(seed_series(), 50u64..2000, -1e4f64..1e4, 0usize..8), |(seeds, window, extra, pick)| {
        let Ok(base) = final_score_of(&seeds, window) else {
            return Ok(());
        };
        let start = base.window_end.saturating_sub(window);
        let mut more = seeds.clone();
        let s = &mut more[pick % seeds.len()];
        let t = s.points.iter().map(|p| p.0).filter(|&t| t < start).max().unwrap_or(0) + 1;
        if t >= start {
            return Ok(());
        }
        s.points.push((t, extra));
        s.points.sort_by_key(|p| p.0);
        prop_assert_eq!(final_score_of(&more, window).unwrap(), base);
        Ok(())
    });
    if let Err(e) = window {
        failures.push(format!("window: {e}"));
    }

    let mut runner = TestRunner::new(PropConfig {
        cases: 256,
        ..PropConfig::default()
    });
    let grid = prop::collection::vec(prop::collection::vec(prop::option::of(-5i32..5), 5), 1..6);
    let ranks = runner.run(&(grid, 0.1f64..10.0, -50.0f64..50.0), |(raw, scale, shift)| {
        let build = |f: &dyn Fn(f64) -> f64| -> BTreeMap<String, BTreeMap<String, f64>> {
            raw.iter()
                .enumerate()
                .map(|(e, row)| {
                    let m = row
                        .iter()
                        .enumerate()
                        .filter_map(|(a, v)| v.map(|v| (format!("algo{a}"), f(v as f64))))
                        .collect();
                    (format!("env{e}"), m)
                })
                .collect()
        };
        prop_assert_eq!(rank_scores(&build(&|v| v)), rank_scores(&build(&|v| (v * scale + shift).exp())));
        Ok(())
    });
    if let Err(e) = ranks {
        failures.push(format!("rank order-invariance: {e}"));
    }

    verdict(
        12,
        failures.is_empty(),
        &if failures.is_empty() {
            "byte-identical outputs for 1 vs 8 workers, final-score window semantics, rank order-invariance all hold".to_string()
        } else {
            failures.join("; ")
        },
    );
}
