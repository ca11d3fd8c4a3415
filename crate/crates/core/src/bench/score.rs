use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::run::{ExperimentRecord, SeedRecord};
use crate::error::{Error, Result};

/// Mean and population std of the returns in the final window, pooled
/// over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: f64,
    pub std: f64,
    pub n_returns: usize,
    pub n_seeds: usize,
    /// Seeds that completed; failed seeds are excluded from the scores.
    pub n_effective_seeds: usize,
    pub window: u64,
    /// Last logged timestep; the window is `[window_end - window, window_end]`.
    pub window_end: u64,
}

impl fmt::Display for ScoreSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_mean_std(self.mean, self.std))
    }
}

/// `"167.4 ± 53.0"`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.1} ± {std:.1}")
}

/// Element `i` is the mean of the up-to-`w` values ending at `i`.
pub fn sliding_window(series: &[f64], w: usize) -> Result<Vec<f64>> {
    if w == 0 {
        return Err(Error::invalid("sliding window must be >= 1"));
    }
    Ok((0..series.len())
        .map(|i| {
            let win = &series[(i + 1).saturating_sub(w)..=i];
            win.iter().sum::<f64>() / win.len() as f64
        })
        .collect())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// [`final_score`] over raw seed series. Failed seeds are skipped; every
/// remaining seed must have a return in the window.
pub fn final_score_of(seeds: &[SeedRecord], window_steps: u64) -> Result<ScoreSummary> {
    let effective: Vec<&SeedRecord> = seeds.iter().filter(|s| !s.is_failed()).collect();
    let end = effective
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .max()
        .ok_or_else(|| Error::invalid("final score: no returns logged"))?;
    let start = end.saturating_sub(window_steps);
    let mut values = Vec::new();
    for s in &effective {
        let before = values.len();
        values.extend(s.points.iter().filter(|p| p.0 >= start && p.0 <= end).map(|p| p.1));
        if values.len() == before {
            return Err(Error::invalid(format!(
                "final score: seed {} has no return in [{start}, {end}]",
                s.seed
            )));
        }
    }
    let (mean, std) = mean_std(&values);
    Ok(ScoreSummary {
        mean,
        std,
        n_returns: values.len(),
        n_seeds: seeds.len(),
        n_effective_seeds: effective.len(),
        window: window_steps,
        window_end: end,
    })
}

/// Score over the final `window_steps` timesteps: all returns, from every
/// completed seed, logged in `[end - window_steps, end]` where `end` is the
/// last logged timestep.
pub fn final_score(record: &ExperimentRecord, window_steps: u64) -> Result<ScoreSummary> {
    final_score_of(&record.seeds, window_steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub timestep: u64,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

/// Learning curve smoothed over `w` episodes per seed. At every logged
/// timestep, each seed contributes its latest smoothed value; the mean and
/// population std are taken over the seeds that have logged anything yet.
pub fn learning_curve(record: &ExperimentRecord, w: usize) -> Result<Vec<CurvePoint>> {
    let mut per_seed = Vec::new();
    for s in record.effective_seeds() {
        let returns: Vec<f64> = s.points.iter().map(|p| p.1).collect();
        let smooth = sliding_window(&returns, w)?;
        per_seed.push(s.points.iter().map(|p| p.0).zip(smooth).collect::<Vec<_>>());
    }
    let grid: BTreeSet<u64> = per_seed.iter().flatten().map(|p| p.0).collect();
    let mut cursors = vec![0usize; per_seed.len()];
    let mut out = Vec::with_capacity(grid.len());
    for t in grid {
        let mut values = Vec::new();
        for (series, cur) in per_seed.iter().zip(cursors.iter_mut()) {
            while *cur < series.len() && series[*cur].0 <= t {
                *cur += 1;
            }
            if *cur > 0 {
                values.push(series[*cur - 1].1);
            }
        }
        let (mean, std) = mean_std(&values);
        out.push(CurvePoint {
            timestep: t,
            mean,
            std,
            n_seeds: values.len(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub algo: String,
    pub mean_rank: f64,
    pub median_rank: f64,
    pub n_algorithms: usize,
}

impl RankRow {
    /// `"4.0 / 10"`.
    pub fn mean_cell(&self) -> String {
        format!("{:.1} / {}", self.mean_rank, self.n_algorithms)
    }

    pub fn median_cell(&self) -> String {
        format!("{:.1} / {}", self.median_rank, self.n_algorithms)
    }
}

/// Ranks algorithms per environment by mean score (1 = best, ties share
/// the average rank, missing or non-finite scores rank below every scored
/// algorithm) and aggregates mean and median rank per algorithm. Rows are
/// sorted by algorithm name.
pub fn rank_scores(scores: &BTreeMap<String, BTreeMap<String, f64>>) -> Vec<RankRow> {
    let algos: BTreeSet<&String> = scores.values().flat_map(|m| m.keys()).collect();
    let n = algos.len();
    let mut ranks: BTreeMap<&String, Vec<f64>> = algos.iter().map(|a| (*a, Vec::new())).collect();
    for per_env in scores.values() {
        let mut order: Vec<(&String, f64)> = algos
            .iter()
            .map(|a| (*a, per_env.get(*a).copied().filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY)))
            .collect();
        order.sort_by(|x, y| y.1.total_cmp(&x.1));
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && order[j + 1].1 == order[i].1 {
                j += 1;
            }
            let shared = (i + j) as f64 / 2.0 + 1.0;
            for (algo, _) in &order[i..=j] {
                ranks.get_mut(*algo).expect("known algorithm").push(shared);
            }
            i = j + 1;
        }
    }
    ranks
        .into_iter()
        .map(|(algo, mut r)| {
            r.sort_by(f64::total_cmp);
            let m = r.len();
            let (mean_rank, median_rank) = if m == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let median = if m % 2 == 1 { r[m / 2] } else { (r[m / 2 - 1] + r[m / 2]) / 2.0 };
                (r.iter().sum::<f64>() / m as f64, median)
            };
            RankRow {
                algo: algo.clone(),
                mean_rank,
                median_rank,
                n_algorithms: n,
            }
        })
        .collect()
}

/// [`rank_scores`] over per-env, per-algorithm summaries.
pub fn rank_table(summaries: &BTreeMap<String, BTreeMap<String, ScoreSummary>>) -> Vec<RankRow> {
    let scores = summaries
        .iter()
        .map(|(env, m)| (env.clone(), m.iter().map(|(a, s)| (a.clone(), s.mean)).collect()))
        .collect();
    rank_scores(&scores)
}
