use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::run::{ExperimentRecord, SeedRecord};
use super::score::{final_score, learning_curve, rank_table, ScoreSummary};
use crate::error::{Error, Result};

/// Version of the JSON summary layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const RETURNS_CSV_HEADER: &str = "seed,timestep,episode_return";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Raw returns, one file per record.
    Csv,
    /// `summary.json`.
    Json,
    /// `summary.md`: a mean ± std table and, with several algorithms, ranks.
    Md,
    /// Smoothed learning curves, one file per record.
    Curves,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 4] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Md, ReportFormat::Curves];

    pub fn name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Md => "md",
            ReportFormat::Curves => "curves",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        ReportFormat::ALL
            .into_iter()
            .find(|f| f.name() == lower || (lower == "markdown" && *f == ReportFormat::Md))
            .ok_or_else(|| Error::Format(s.to_string()))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct Timing {
    fingerprint: String,
    wall_clock_seconds: f64,
}

/// Writes `record-<label>.json` and, separately, `timing-<label>.json`.
/// Only the record file is a deterministic function of the config.
pub fn write_record(dir: &Path, record: &ExperimentRecord) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(format!("record-{}.json", record.label()));
    let json = serde_json::to_string_pretty(record).map_err(|e| Error::Parse(e.to_string()))?;
    write_file(&path, &(json + "\n"))?;
    let timing = Timing {
        fingerprint: record.fingerprint.clone(),
        wall_clock_seconds: record.wall_clock_seconds,
    };
    let json = serde_json::to_string_pretty(&timing).map_err(|e| Error::Parse(e.to_string()))?;
    write_file(&dir.join(format!("timing-{}.json", record.label())), &(json + "\n"))?;
    Ok(path)
}

pub fn read_record(path: &Path) -> Result<ExperimentRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut record: ExperimentRecord = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    for s in &record.seeds {
        s.validate()?;
    }
    let timing = path.with_file_name(format!("timing-{}.json", record.label()));
    if let Ok(text) = std::fs::read_to_string(&timing) {
        if let Ok(t) = serde_json::from_str::<Timing>(&text) {
            record.wall_clock_seconds = t.wall_clock_seconds;
        }
    }
    Ok(record)
}

/// Every `record-*.json` directly inside `dir`, in file-name order.
pub fn read_records(dir: &Path) -> Result<Vec<ExperimentRecord>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("record-") && name.ends_with(".json") {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| read_record(p)).collect()
}

/// Raw returns of the completed seeds.
pub fn returns_csv(record: &ExperimentRecord) -> String {
    let mut out = String::from(RETURNS_CSV_HEADER);
    out.push('\n');
    for s in record.effective_seeds() {
        for (t, r) in &s.points {
            let _ = writeln!(out, "{},{t},{r}", s.seed);
        }
    }
    out
}

/// Parses [`returns_csv`] output back into per-seed series.
pub fn parse_returns_csv(text: &str) -> Result<Vec<SeedRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == RETURNS_CSV_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header '{RETURNS_CSV_HEADER}', found '{}'",
                other.unwrap_or("")
            )))
        }
    }
    let mut seeds: BTreeMap<u64, Vec<(u64, f64)>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("line {}: '{line}'", i + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad());
        }
        let seed: u64 = fields[0].trim().parse().map_err(|_| bad())?;
        let t: u64 = fields[1].trim().parse().map_err(|_| bad())?;
        let r: f64 = fields[2].trim().parse().map_err(|_| bad())?;
        seeds.entry(seed).or_default().push((t, r));
    }
    let out: Vec<SeedRecord> = seeds.into_iter().map(|(s, p)| SeedRecord::new(s, p)).collect();
    for s in &out {
        s.validate()?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub env: String,
    pub algo: String,
    pub fingerprint: String,
    /// Absent when no seed completed.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_returns: usize,
    pub n_seeds: usize,
    pub n_effective_seeds: usize,
    pub failed_seeds: Vec<u64>,
    pub window: u64,
    pub window_end: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema_version: u32,
    /// How `mean` and `std` are computed.
    pub score: String,
    pub summaries: Vec<SummaryEntry>,
}

/// Final score of a record using its configured window.
pub fn record_score(record: &ExperimentRecord) -> Result<ScoreSummary> {
    final_score(record, record.config.experiment.final_window)
}

fn summary_entry(record: &ExperimentRecord) -> SummaryEntry {
    let score = record_score(record).ok();
    SummaryEntry {
        env: record.env.clone(),
        algo: record.algo.to_string(),
        fingerprint: record.fingerprint.clone(),
        mean: score.map(|s| s.mean),
        std: score.map(|s| s.std),
        n_returns: score.map_or(0, |s| s.n_returns),
        n_seeds: record.seeds.len(),
        n_effective_seeds: record.effective_seeds().count(),
        failed_seeds: record.failed_seeds(),
        window: record.config.experiment.final_window,
        window_end: score.map(|s| s.window_end),
    }
}

pub fn summary_json(records: &[ExperimentRecord]) -> Result<String> {
    let file = SummaryFile {
        schema_version: SCHEMA_VERSION,
        score: "mean and population std of episode returns logged in the final `window` timesteps, pooled over completed seeds".into(),
        summaries: records.iter().map(summary_entry).collect(),
    };
    serde_json::to_string_pretty(&file).map(|s| s + "\n").map_err(|e| Error::Parse(e.to_string()))
}

/// Column label of each record: the algorithm name, qualified by a
/// fingerprint prefix when one environment has several records of it.
fn column_labels(records: &[ExperimentRecord]) -> Vec<String> {
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in records {
        *counts.entry((r.env.as_str(), r.algo.name())).or_default() += 1;
    }
    let ambiguous: BTreeSet<&str> = counts.iter().filter(|(_, &c)| c > 1).map(|((_, a), _)| *a).collect();
    records
        .iter()
        .map(|r| {
            if ambiguous.contains(r.algo.name()) {
                format!("{} [{}]", r.algo, &r.fingerprint[..8.min(r.fingerprint.len())])
            } else {
                r.algo.to_string()
            }
        })
        .collect()
}

pub fn summary_markdown(records: &[ExperimentRecord]) -> String {
    let labels = column_labels(records);
    let mut columns: Vec<&String> = Vec::new();
    for l in &labels {
        if !columns.contains(&l) {
            columns.push(l);
        }
    }
    let mut cells: BTreeMap<&str, BTreeMap<&String, String>> = BTreeMap::new();
    let mut scored: BTreeMap<String, BTreeMap<String, ScoreSummary>> = BTreeMap::new();
    let mut notes = Vec::new();
    let windows: BTreeSet<u64> = records.iter().map(|r| r.config.experiment.final_window).collect();
    for (r, label) in records.iter().zip(&labels) {
        let cell = match record_score(r) {
            Ok(s) => {
                scored.entry(r.env.clone()).or_default().insert(label.clone(), s);
                s.to_string()
            }
            Err(_) => "n/a".to_string(),
        };
        cells.entry(r.env.as_str()).or_default().insert(label, cell);
        let failed = r.failed_seeds();
        if !failed.is_empty() {
            let ids: Vec<String> = failed.iter().map(u64::to_string).collect();
            notes.push(format!(
                "- {} / {label}: failed seeds {} ({} of {} seeds effective)",
                r.env,
                ids.join(", "),
                r.seeds.len() - failed.len(),
                r.seeds.len()
            ));
        }
    }

    let mut out = String::from("# Results\n\n");
    let ws: Vec<String> = windows.iter().map(u64::to_string).collect();
    let _ = writeln!(
        out,
        "Mean ± std of episode returns over the final {} timesteps, pooled over seeds.\n",
        ws.join("/")
    );
    out.push_str("| Environment |");
    for c in &columns {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(columns.len()));
    out.push('\n');
    for (env, row) in &cells {
        let _ = write!(out, "| {env} |");
        for c in &columns {
            let _ = write!(out, " {} |", row.get(c).map_or("", String::as_str));
        }
        out.push('\n');
    }
    if !notes.is_empty() {
        out.push('\n');
        out.push_str(&notes.join("\n"));
        out.push('\n');
    }
    if columns.len() > 1 {
        out.push_str("\n## Ranks\n\n| Algorithm | Mean rank | Median rank |\n|---|---|---|\n");
        for row in rank_table(&scored) {
            let _ = writeln!(out, "| {} | {} | {} |", row.algo, row.mean_cell(), row.median_cell());
        }
    }
    out
}

pub fn curve_csv(record: &ExperimentRecord) -> Result<String> {
    let mut out = String::from("timestep,smoothed_mean,smoothed_std,n_seeds\n");
    for p in learning_curve(record, record.config.experiment.curve_window)? {
        let _ = writeln!(out, "{},{},{},{}", p.timestep, p.mean, p.std, p.n_seeds);
    }
    Ok(out)
}

/// Renders `records` in `format` into `dir` and returns the written paths.
pub fn emit_report(records: &[ExperimentRecord], format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::invalid("no records to report"));
    }
    create_dir(dir)?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Csv => {
            for r in records {
                let path = dir.join(format!("returns-{}.csv", r.label()));
                write_file(&path, &returns_csv(r))?;
                written.push(path);
            }
        }
        ReportFormat::Json => {
            let path = dir.join("summary.json");
            write_file(&path, &summary_json(records)?)?;
            written.push(path);
        }
        ReportFormat::Md => {
            let path = dir.join("summary.md");
            write_file(&path, &summary_markdown(records))?;
            written.push(path);
        }
        ReportFormat::Curves => {
            for r in records {
                let path = dir.join(format!("curve-{}.csv", r.label()));
                write_file(&path, &curve_csv(r)?)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
