//! `train`: one config-driven run producing metrics, a checkpoint, and a
//! summary on disk.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use stochdepth::{fit, Error, FitResult, Network, Result, StreamSet};

use crate::config::ExperimentConfig;

/// Aggregate record written next to the per-epoch metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub selected_epoch: usize,
    pub val_error: f64,
    pub test_error: f64,
    pub total_wall_seconds: f64,
    /// Mean over epochs of the skipped-branch fraction; epochs all see
    /// the same minibatch count, so this equals the run-level fraction.
    pub savings_frac: f64,
}

/// Trains according to `cfg` and returns the outcome without touching
/// the filesystem.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(FitResult, RunSummary)> {
    cfg.validate()?;
    let started = Instant::now();
    let mut streams = StreamSet::new(cfg.seed);
    let ds = cfg.dataset.build(&mut streams)?;
    let mut net = Network::init(cfg.network.clone(), &mut streams.weight_init)?;
    let fit_cfg = cfg.fit_config()?;
    let result = fit(&mut net, &ds, &fit_cfg, &mut streams)?;
    let total_wall_seconds = started.elapsed().as_secs_f64();

    let savings_frac = result
        .history
        .iter()
        .map(|m| m.block_flops_saved_frac)
        .sum::<f64>()
        / result.history.len() as f64;
    let summary = RunSummary {
        selected_epoch: result.selected_epoch,
        val_error: result.val_error,
        test_error: result.test_error,
        total_wall_seconds,
        savings_frac,
    };
    Ok((result, summary))
}

/// Runs the experiment and writes `metrics.jsonl`, `checkpoint.json`,
/// and `summary.json` into `out_dir`.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let (result, summary) = run_experiment(cfg)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out_dir.display()))))?;

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut f = fs::File::create(&metrics_path)?;
    for m in &result.history {
        let line = serde_json::to_string(m)?;
        writeln!(f, "{line}")?;
    }

    result.best.save_file(&out_dir.join("checkpoint.json"))?;
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}
