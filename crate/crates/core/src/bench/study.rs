use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{record_score, write_record, SCHEMA_VERSION};
use super::run::{run_experiment, ExperimentRecord};
use super::score::{format_mean_std, ScoreSummary};
use crate::config::{ExperimentConfig, GridSpec};
use crate::error::{Error, Result};

/// Relative change beyond which a noise result is flagged.
pub const NOISE_FLAG_THRESHOLD: f64 = 0.10;

/// Noise levels of the standard robustness study, as `(sigma_o, sigma_a)`.
pub const NOISE_PRESETS: [(f64, f64); 4] = [(0.1, 0.0), (0.01, 0.0), (0.0, 0.1), (0.0, 0.03)];

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct HorizonRow {
    pub horizon: usize,
    pub summary: ScoreSummary,
    pub record: ExperimentRecord,
}

/// Runs the experiment once per planning horizon, holding the population
/// and every other setting fixed.
pub fn horizon_sweep(cfg: &ExperimentConfig, horizons: &[usize]) -> Result<Vec<HorizonRow>> {
    if horizons.is_empty() {
        return Err(Error::invalid("horizon sweep needs at least one horizon"));
    }
    horizons
        .iter()
        .map(|&h| {
            let mut c = cfg.clone();
            c.set_planning_horizon(h);
            let record = run_experiment(&c)?;
            let summary = record_score(&record)?;
            Ok(HorizonRow {
                horizon: h,
                summary,
                record,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct HorizonFile<'a> {
    schema_version: u32,
    env: &'a str,
    algo: String,
    rows: Vec<(usize, &'a ScoreSummary)>,
}

/// Writes each record plus `horizon.json` and `horizon.md`.
pub fn write_horizon_sweep(dir: &Path, rows: &[HorizonRow]) -> Result<Vec<PathBuf>> {
    let first = rows.first().ok_or_else(|| Error::invalid("empty horizon sweep"))?;
    let mut written = Vec::new();
    for r in rows {
        written.push(write_record(dir, &r.record)?);
    }
    let file = HorizonFile {
        schema_version: SCHEMA_VERSION,
        env: &first.record.env,
        algo: first.record.algo.to_string(),
        rows: rows.iter().map(|r| (r.horizon, &r.summary)).collect(),
    };
    let json = dir.join("horizon.json");
    write_json(&json, &file)?;
    let mut md = format!("# Planning horizon: {} / {}\n\n| Horizon | Score |\n|---|---|\n", file.env, file.algo);
    for r in rows {
        let _ = writeln!(md, "| {} | {} |", r.horizon, r.summary);
    }
    let md_path = dir.join("horizon.md");
    write_text(&md_path, &md)?;
    written.extend([json, md_path]);
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub overrides: Vec<(String, toml::Value)>,
    pub summary: Option<ScoreSummary>,
    pub record: ExperimentRecord,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    /// Index of the cell with the highest final-score mean. Ties go to the
    /// lower wall-clock time, then to the earlier cell.
    pub best: usize,
}

impl GridResult {
    pub fn best_config(&self) -> &ExperimentConfig {
        &self.cells[self.best].record.config
    }
}

/// Runs every cell of the grid's Cartesian product with all seeds.
pub fn grid_search(base: &ExperimentConfig, grid: &GridSpec) -> Result<GridResult> {
    let combos = grid.cells();
    if combos.is_empty() || grid.axes.is_empty() {
        return Err(Error::invalid("grid is empty"));
    }
    let mut cells = Vec::with_capacity(combos.len());
    for overrides in combos {
        let mut cfg = base.clone();
        for (k, v) in &overrides {
            cfg = cfg.with_override(k, v.clone())?;
        }
        let record = run_experiment(&cfg)?;
        let summary = record_score(&record).ok();
        cells.push(GridCell {
            overrides,
            summary,
            record,
        });
    }
    let best = (0..cells.len())
        .filter(|&i| cells[i].summary.is_some())
        .min_by(|&i, &j| {
            let (a, b) = (&cells[i], &cells[j]);
            let (sa, sb) = (a.summary.unwrap().mean, b.summary.unwrap().mean);
            sb.total_cmp(&sa)
                .then(a.record.wall_clock_seconds.total_cmp(&b.record.wall_clock_seconds))
                .then(i.cmp(&j))
        })
        .ok_or_else(|| Error::invalid("grid search: no cell produced a score"))?;
    Ok(GridResult { cells, best })
}

#[derive(Debug, Serialize)]
struct GridFileCell<'a> {
    overrides: toml::Table,
    fingerprint: &'a str,
    summary: Option<&'a ScoreSummary>,
}

#[derive(Debug, Serialize)]
struct GridFile<'a> {
    schema_version: u32,
    best: usize,
    cells: Vec<GridFileCell<'a>>,
}

/// Writes each cell's record under `cell-<i>/`, plus `grid.json`,
/// `grid.md` and the winning config as `best.toml`.
pub fn write_grid(dir: &Path, result: &GridResult) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (i, c) in result.cells.iter().enumerate() {
        written.push(write_record(&dir.join(format!("cell-{i}")), &c.record)?);
    }
    let file = GridFile {
        schema_version: SCHEMA_VERSION,
        best: result.best,
        cells: result
            .cells
            .iter()
            .map(|c| GridFileCell {
                overrides: c.overrides.iter().cloned().collect(),
                fingerprint: &c.record.fingerprint,
                summary: c.summary.as_ref(),
            })
            .collect(),
    };
    let json = dir.join("grid.json");
    write_json(&json, &file)?;
    let mut md = String::from("# Grid search\n\n| Cell | Settings | Score |\n|---|---|---|\n");
    for (i, c) in result.cells.iter().enumerate() {
        let settings: Vec<String> = c.overrides.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        let score = c.summary.map_or("n/a".to_string(), |s| s.to_string());
        let mark = if i == result.best { " (best)" } else { "" };
        let _ = writeln!(md, "| {i}{mark} | {} | {score} |", settings.join(", "));
    }
    let md_path = dir.join("grid.md");
    write_text(&md_path, &md)?;
    let best = dir.join("best.toml");
    write_text(&best, &result.best_config().to_toml_string()?)?;
    written.extend([json, md_path, best]);
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct NoiseRow {
    pub sigma_o: f64,
    pub sigma_a: f64,
    pub baseline: ScoreSummary,
    pub noisy: ScoreSummary,
    pub baseline_record: ExperimentRecord,
    pub noisy_record: ExperimentRecord,
}

impl NoiseRow {
    /// `(noisy - baseline) / |baseline|`.
    pub fn relative_change(&self) -> f64 {
        (self.noisy.mean - self.baseline.mean) / self.baseline.mean.abs()
    }

    pub fn flagged(&self) -> bool {
        self.relative_change().abs() > NOISE_FLAG_THRESHOLD
    }
}

/// Runs `cfg` without noise and with the given observation/action noise,
/// on the same seeds.
pub fn noise_study(cfg: &ExperimentConfig, sigma_o: f64, sigma_a: f64) -> Result<NoiseRow> {
    let mut base = cfg.clone();
    base.noise.sigma_o = 0.0;
    base.noise.sigma_a = 0.0;
    let mut noisy = cfg.clone();
    noisy.noise.sigma_o = sigma_o;
    noisy.noise.sigma_a = sigma_a;
    let baseline_record = run_experiment(&base)?;
    let noisy_record = run_experiment(&noisy)?;
    Ok(NoiseRow {
        sigma_o,
        sigma_a,
        baseline: record_score(&baseline_record)?,
        noisy: record_score(&noisy_record)?,
        baseline_record,
        noisy_record,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct NoiseFileRow {
    sigma_o: f64,
    sigma_a: f64,
    baseline: ScoreSummary,
    noisy: ScoreSummary,
    relative_change: f64,
    flagged: bool,
}

/// Writes both records plus `noise.json` and `noise.md`. The markdown
/// table's delta column marks changes beyond 10% with `*`.
pub fn write_noise_study(dir: &Path, rows: &[NoiseRow]) -> Result<Vec<PathBuf>> {
    let first = rows.first().ok_or_else(|| Error::invalid("empty noise study"))?;
    let mut written = Vec::new();
    for r in rows {
        written.push(write_record(dir, &r.baseline_record)?);
        written.push(write_record(dir, &r.noisy_record)?);
    }
    let file: Vec<NoiseFileRow> = rows
        .iter()
        .map(|r| NoiseFileRow {
            sigma_o: r.sigma_o,
            sigma_a: r.sigma_a,
            baseline: r.baseline,
            noisy: r.noisy,
            relative_change: r.relative_change(),
            flagged: r.flagged(),
        })
        .collect();
    let json = dir.join("noise.json");
    write_json(&json, &serde_json::json!({ "schema_version": SCHEMA_VERSION, "rows": file }))?;
    let mut md = format!(
        "# Noise robustness: {} / {}\n\n| sigma_o | sigma_a | Noise-free | Noisy | Delta |\n|---|---|---|---|---|\n",
        first.baseline_record.env, first.baseline_record.algo
    );
    for r in rows {
        let flag = if r.flagged() { " *" } else { "" };
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {:+.1}%{flag} |",
            r.sigma_o,
            r.sigma_a,
            format_mean_std(r.baseline.mean, r.baseline.std),
            format_mean_std(r.noisy.mean, r.noisy.std),
            100.0 * r.relative_change()
        );
    }
    md.push_str("\n`*`: relative change above 10%.\n");
    let md_path = dir.join("noise.md");
    write_text(&md_path, &md)?;
    written.extend([json, md_path]);
    Ok(written)
}
