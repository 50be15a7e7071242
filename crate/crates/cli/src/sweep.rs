//! `sweep`: run every (rule, p_L, depth, seed) cell of a grid and emit
//! per-cell and mean-over-seeds CSV tables.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use stochdepth::stochastic::DecayRule;
use stochdepth::{Error, Result};

use crate::config::{spec_with_depth, ExperimentConfig, ModeConfig};
use crate::run::run_experiment;

/// One grid cell in run order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub rule: DecayRule,
    pub p_l: f64,
    pub depth: usize,
    pub seed: u64,
}

/// Result row for one cell. Metric fields are empty when the cell
/// failed; the failure reason is recorded instead of killing the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rule: String,
    pub p_l: f64,
    pub depth: usize,
    pub seed: u64,
    pub test_error: Option<f64>,
    pub wall_seconds: Option<f64>,
    pub savings_frac: Option<f64>,
    pub error: Option<String>,
}

/// Mean over the successful seeds of one (rule, p_L, depth) cell group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeanRow {
    pub rule: String,
    pub p_l: f64,
    pub depth: usize,
    pub seeds_ok: usize,
    pub mean_test_error: Option<f64>,
    pub mean_wall_seconds: Option<f64>,
    pub mean_savings_frac: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub means: Vec<SweepMeanRow>,
}

/// Expands the grid into cells in deterministic order:
/// rules → p_L → depths → seeds.
pub fn expand_cells(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let grid = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [sweep] table".to_string()))?;
    grid.validate()?;
    let depths = grid
        .depths
        .clone()
        .unwrap_or_else(|| vec![cfg.network.depth()]);
    let mut cells = Vec::new();
    for &rule in &grid.rules {
        for &p_l in &grid.p_l {
            for &depth in &depths {
                for &seed in &grid.seeds {
                    cells.push(SweepCell {
                        rule,
                        p_l,
                        depth,
                        seed,
                    });
                }
            }
        }
    }
    Ok(cells)
}

fn try_cell(base: &ExperimentConfig, cell: &SweepCell) -> Result<(f64, f64, f64)> {
    let mut cfg = base.clone();
    cfg.network = spec_with_depth(&base.network, cell.depth)?;
    cfg.mode = ModeConfig::stochastic(cell.rule, cell.p_l);
    cfg.seed = cell.seed;
    cfg.sweep = None;
    let (_, summary) = run_experiment(&cfg)?;
    Ok((
        summary.test_error,
        summary.total_wall_seconds,
        summary.savings_frac,
    ))
}

/// Runs one cell, converting any failure into an error row.
pub fn run_cell(base: &ExperimentConfig, cell: &SweepCell) -> SweepRow {
    let mut row = SweepRow {
        rule: cell.rule.to_string(),
        p_l: cell.p_l,
        depth: cell.depth,
        seed: cell.seed,
        test_error: None,
        wall_seconds: None,
        savings_frac: None,
        error: None,
    };
    match try_cell(base, cell) {
        Ok((test_error, wall, savings)) => {
            row.test_error = Some(test_error);
            row.wall_seconds = Some(wall);
            row.savings_frac = Some(savings);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Groups rows by (rule, p_L, depth) in first-seen order and averages
/// the successful seeds.
pub fn aggregate_means(rows: &[SweepRow]) -> Vec<SweepMeanRow> {
    let mut order: Vec<(String, f64, usize)> = Vec::new();
    for r in rows {
        let key = (r.rule.clone(), r.p_l, r.depth);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(rule, p_l, depth)| {
            let ok: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| {
                    r.rule == rule && r.p_l == p_l && r.depth == depth && r.error.is_none()
                })
                .collect();
            SweepMeanRow {
                rule,
                p_l,
                depth,
                seeds_ok: ok.len(),
                mean_test_error: mean_of(
                    &ok.iter().filter_map(|r| r.test_error).collect::<Vec<_>>(),
                ),
                mean_wall_seconds: mean_of(
                    &ok.iter().filter_map(|r| r.wall_seconds).collect::<Vec<_>>(),
                ),
                mean_savings_frac: mean_of(
                    &ok.iter().filter_map(|r| r.savings_frac).collect::<Vec<_>>(),
                ),
            }
        })
        .collect()
}

/// Runs all cells (optionally on several worker threads — cells are
/// fully independent) and returns rows in grid order.
pub fn run_grid(cfg: &ExperimentConfig, workers: usize) -> Result<SweepOutcome> {
    let cells = expand_cells(cfg)?;
    let rows: Vec<SweepRow> = if workers <= 1 {
        cells.iter().map(|c| run_cell(cfg, c)).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<SweepRow>>> =
            cells.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers.min(cells.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= cells.len() {
                        break;
                    }
                    let row = run_cell(cfg, &cells[i]);
                    *slots[i].lock().unwrap() = Some(row);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("all cells visited"))
            .collect()
    };
    let means = aggregate_means(&rows);
    Ok(SweepOutcome { rows, means })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the grid and writes `sweep.csv` (per cell) and `sweep_mean.csv`
/// (mean over seeds) into `out_dir`.
pub fn cmd_sweep(cfg: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<SweepOutcome> {
    cfg.validate()?;
    let outcome = run_grid(cfg, workers)?;
    std::fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join("sweep.csv"), &outcome.rows)?;
    write_csv(&out_dir.join("sweep_mean.csv"), &outcome.means)?;
    Ok(outcome)
}
