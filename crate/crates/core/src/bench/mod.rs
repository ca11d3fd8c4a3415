//! Multi-seed experiments and their scoring.
//!
//! A run produces an [`ExperimentRecord`]: for every seed, the return of
//! each finished episode keyed by the timestep at which it ended. Records
//! are scored by [`final_score`] (returns in the last `window` timesteps,
//! pooled over seeds) and smoothed for plotting by [`learning_curve`]
//! (a sliding window over episodes). Seed `i` of a run draws all of its
//! randomness from `RngStream::root(master_seed).split(i)`, so records do
//! not depend on how many worker threads ran them.

mod report;
mod run;
mod score;
mod study;

pub use report::{
    curve_csv, emit_report, parse_returns_csv, read_record, read_records, record_score, returns_csv, summary_json, summary_markdown,
    write_record, ReportFormat, SummaryEntry, SummaryFile, RETURNS_CSV_HEADER, SCHEMA_VERSION,
};
pub use run::{run_experiment, seed_stream, ExperimentRecord, SeedRecord};
pub use score::{
    final_score, final_score_of, format_mean_std, learning_curve, rank_scores, rank_table, sliding_window, CurvePoint, RankRow,
    ScoreSummary,
};
pub use study::{
    grid_search, horizon_sweep, noise_study, write_grid, write_horizon_sweep, write_noise_study, GridCell, GridResult, HorizonRow,
    NoiseRow, NOISE_FLAG_THRESHOLD, NOISE_PRESETS,
};
