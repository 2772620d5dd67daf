//! Batch runner for the parabolic Anderson lab: config parsing, experiment dispatch and result files.

pub mod config;
pub mod error;
pub mod output;
pub mod record;
pub mod report;
pub mod runners;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use record::ResultRecord;

/// Reads and parses a config file; read failures are reported as config errors.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, ConfigError> {
    let raw = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        column: None,
        field: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let stem = path.file_stem().map_or_else(
        || "experiment".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    parse_config(&raw, &stem, seed)
}

/// Where results go: the explicit directory, then the config's `output`, then `results/<id>`.
pub fn output_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(&cfg.id))
}

/// Runs an experiment and writes its files into `dir`. Wall-clock time goes to `timing.json` so that
/// `results.json` stays byte-identical across reruns.
pub fn execute(cfg: &ExperimentConfig, dir: &Path) -> Result<ResultRecord> {
    let start = Instant::now();
    let rec = runners::run(cfg)?;
    output::write_record(dir, &rec)?;
    let timing = serde_json::json!({
        "experiment": cfg.id,
        "threads": rayon::current_num_threads(),
        "wall_clock_seconds": start.elapsed().as_secs_f64(),
    });
    let mut s = serde_json::to_string_pretty(&timing)?;
    s.push('\n');
    output::write_atomic(&dir.join("timing.json"), s.as_bytes()).context("writing timing.json")?;
    Ok(rec)
}
