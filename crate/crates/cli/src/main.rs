use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mbrl_core::bench::{
    emit_report, grid_search, horizon_sweep, noise_study, read_records, record_score, write_grid, write_horizon_sweep, write_noise_study,
    write_record, ExperimentRecord, ReportFormat, NOISE_PRESETS,
};
use mbrl_core::config::{Algorithm, ExperimentConfig, GridSpec};

#[derive(Debug, Parser)]
#[command(name = "mbrl", version, about = "Model-based planning experiments and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its record.
    Run(RunArgs),
    /// Grid search over hyperparameters.
    Sweep {
        #[command(flatten)]
        base: BaseArgs,
        /// TOML file mapping dotted config keys to lists of values.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Planning-horizon sweep at fixed population.
    Horizon {
        #[command(flatten)]
        base: BaseArgs,
        /// Comma-separated horizons, e.g. 10,20,30.
        #[arg(long, value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
    },
    /// Noise-free vs noisy runs on the same seeds.
    Noise {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long = "sigma-o", default_value_t = 0.0)]
        sigma_o: f64,
        #[arg(long = "sigma-a", default_value_t = 0.0)]
        sigma_a: f64,
        /// Run the standard set of noise levels instead of one.
        #[arg(long, conflicts_with_all = ["sigma_o", "sigma_a"])]
        preset: bool,
    },
    /// Render records from a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// csv, json, md or curves.
        #[arg(long)]
        format: String,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct BaseArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file; optional when --env and --algo are given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    /// Total environment timesteps per seed.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn out_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.experiment.out.clone()).unwrap_or_else(|| PathBuf::from("results"))
}

fn base_config(base: &BaseArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = load(&base.config)?;
    if let Some(w) = base.workers {
        cfg.experiment.workers = w;
    }
    let dir = out_dir(&cfg, base.out.clone());
    Ok((cfg, dir))
}

fn summary_line(rec: &ExperimentRecord) -> String {
    let n = rec.seeds.len();
    let eff = rec.effective_seeds().count();
    match record_score(rec) {
        Ok(s) => format!("{} {}: {s} ({eff}/{n} seeds)", rec.env, rec.algo),
        Err(e) => format!("{} {}: no score ({eff}/{n} seeds): {e}", rec.env, rec.algo),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = match (&args.config, &args.env, &args.algo) {
        (Some(path), _, _) => load(path)?,
        (None, Some(env), Some(algo)) => ExperimentConfig::new(env, algo.parse::<Algorithm>()?),
        _ => bail!("run needs --config, or both --env and --algo"),
    };
    if let Some(env) = args.env {
        cfg.experiment.env = env;
    }
    if let Some(algo) = args.algo {
        cfg.experiment.algo = algo.parse()?;
    }
    if let Some(steps) = args.steps {
        cfg.experiment.total_timesteps = steps;
    }
    if let Some(seeds) = args.seeds {
        cfg.experiment.seeds = seeds;
    }
    if let Some(w) = args.workers {
        cfg.experiment.workers = w;
    }
    cfg.validate()?;
    let dir = out_dir(&cfg, args.out);
    let rec = mbrl_core::bench::run_experiment(&cfg)?;
    let path = write_record(&dir, &rec)?;
    println!("{}", summary_line(&rec));
    for s in rec.seeds.iter().filter(|s| s.is_failed()) {
        eprintln!("seed {} failed: {}", s.seed, s.failed.as_deref().unwrap_or(""));
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args)?,
        Command::Sweep { base, grid } => {
            let (cfg, dir) = base_config(&base)?;
            let grid = GridSpec::load(&grid).with_context(|| format!("loading grid {}", grid.display()))?;
            let result = grid_search(&cfg, &grid)?;
            write_grid(&dir, &result)?;
            for (i, c) in result.cells.iter().enumerate() {
                let mark = if i == result.best { " (best)" } else { "" };
                println!("cell {i}{mark}: {}", summary_line(&c.record));
            }
            println!("wrote {}", dir.join("grid.md").display());
        }
        Command::Horizon { base, horizons } => {
            let (cfg, dir) = base_config(&base)?;
            let rows = horizon_sweep(&cfg, &horizons)?;
            write_horizon_sweep(&dir, &rows)?;
            for r in &rows {
                println!("horizon {}: {}", r.horizon, r.summary);
            }
            println!("wrote {}", dir.join("horizon.md").display());
        }
        Command::Noise {
            base,
            sigma_o,
            sigma_a,
            preset,
        } => {
            let (cfg, dir) = base_config(&base)?;
            let levels = if preset { NOISE_PRESETS.to_vec() } else { vec![(sigma_o, sigma_a)] };
            let rows = levels
                .into_iter()
                .map(|(o, a)| noise_study(&cfg, o, a))
                .collect::<mbrl_core::Result<Vec<_>>>()?;
            write_noise_study(&dir, &rows)?;
            for r in &rows {
                let flag = if r.flagged() { " (>10%)" } else { "" };
                println!(
                    "sigma_o={} sigma_a={}: {} -> {} ({:+.1}%{flag})",
                    r.sigma_o,
                    r.sigma_a,
                    r.baseline,
                    r.noisy,
                    100.0 * r.relative_change()
                );
            }
            println!("wrote {}", dir.join("noise.md").display());
        }
        Command::Report { input, format, out } => {
            let format: ReportFormat = format.parse()?;
            let records = read_records(&input)?;
            if records.is_empty() {
                bail!("no record-*.json files in {}", input.display());
            }
            for p in emit_report(&records, format, out.as_deref().unwrap_or(&input))? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}
