//! Slow self-checks built on the shipped reference experiment: run the
//! 54-block spirals configuration across five fixed seeds in constant,
//! linear-decay, and uniform gated modes, then verify runtime savings,
//! test-error ordering, late-training gradient signal, and the survival
//! sweep. Shared by `check --full` and the acceptance test suite.

use std::fs;
use std::path::PathBuf;

use stochdepth::stochastic::{DecayRule, SurvivalSchedule};
use stochdepth::{Error, Result};

use crate::check::CheckOutcome;
use crate::config::{ExperimentConfig, ModeConfig};
use crate::run::{run_experiment, RunSummary};
use crate::sweep::cmd_sweep;
use stochdepth::FitResult;

/// Seeds the reference comparisons are shipped with; `sweep` uses the
/// first two.
pub const SHIPPED_SEEDS: [u64; 5] = [11, 14, 17, 19, 21];

pub const REFERENCE_TOML: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/spirals_depth54.toml"));
pub const SWEEP_TOML: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/spirals_sweep.toml"));

pub fn reference_config() -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml_str(REFERENCE_TOML)
}

/// One trained run: full history plus the selected-checkpoint summary.
pub struct ModeRun {
    pub fit: FitResult,
    pub summary: RunSummary,
}

pub struct SeedRuns {
    pub seed: u64,
    pub baseline: ModeRun,
    pub linear: ModeRun,
    pub uniform: ModeRun,
}

/// The reference experiment across all shipped seeds and all three modes.
pub struct ReferenceBundle {
    pub runs: Vec<SeedRuns>,
}

fn run_mode(base: &ExperimentConfig, seed: u64, mode: ModeConfig) -> Result<ModeRun> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.mode = mode;
    let (fit, summary) = run_experiment(&cfg)?;
    Ok(ModeRun { fit, summary })
}

pub fn run_reference_bundle() -> Result<ReferenceBundle> {
    let base = reference_config()?;
    let mut runs = Vec::new();
    for &seed in &SHIPPED_SEEDS {
        runs.push(SeedRuns {
            seed,
            baseline: run_mode(&base, seed, ModeConfig::constant())?,
            linear: run_mode(&base, seed, ModeConfig::stochastic(DecayRule::LinearDecay, 0.5))?,
            uniform: run_mode(&base, seed, ModeConfig::stochastic(DecayRule::Uniform, 0.5))?,
        });
    }
    Ok(ReferenceBundle { runs })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

/// Criterion: over the shipped linear-decay runs, the measured fraction
/// of skipped blocks lands within ±0.03 of the schedule's estimate, and
/// the median epoch wall time is at most 0.85× the constant baseline's.
pub fn check_runtime_savings(bundle: &ReferenceBundle) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let cfg = reference_config()?;
        let schedule =
            SurvivalSchedule::new(DecayRule::LinearDecay, 0.5, cfg.network.depth())?;
        let expected = schedule.savings_estimate();

        // Constant runs execute every block, so their executed-block count
        // doubles as the per-epoch total available to skip.
        let executed: u64 = bundle
            .runs
            .iter()
            .flat_map(|s| s.linear.fit.history.iter())
            .map(|m| m.blocks_executed)
            .sum();
        let available: u64 = bundle
            .runs
            .iter()
            .flat_map(|s| s.baseline.fit.history.iter())
            .map(|m| m.blocks_executed)
            .sum();
        let measured = 1.0 - executed as f64 / available as f64;
        let minibatches = available / cfg.network.depth() as u64;

        let wall_linear = median(
            bundle
                .runs
                .iter()
                .flat_map(|s| s.linear.fit.history.iter())
                .map(|m| m.wall_seconds)
                .collect(),
        );
        let wall_const = median(
            bundle
                .runs
                .iter()
                .flat_map(|s| s.baseline.fit.history.iter())
                .map(|m| m.wall_seconds)
                .collect(),
        );
        let ratio = wall_linear / wall_const;

        let ok = minibatches >= 500 && (measured - expected).abs() <= 0.03 && ratio <= 0.85;
        Ok((
            ok,
            format!(
                "skip fraction {measured:.4} vs estimate {expected:.4} (tol ±0.03, \
                 {minibatches} minibatches); median epoch wall ratio {ratio:.3} (need ≤ 0.85)"
            ),
        ))
    };
    match run() {
        Ok((ok, detail)) => CheckOutcome::new("runtime savings", ok, detail),
        Err(e) => CheckOutcome::new("runtime savings", false, format!("error: {e}")),
    }
}

/// Criterion: averaged over the shipped seeds, linear-decay gating at
/// final survival 0.5 reaches test error no worse than the constant
/// baseline, and no worse than uniform gating at the same survival.
pub fn check_test_error(bundle: &ReferenceBundle) -> CheckOutcome {
    let n = bundle.runs.len() as f64;
    let mean = |f: &dyn Fn(&SeedRuns) -> f64| bundle.runs.iter().map(|s| f(s)).sum::<f64>() / n;
    let m_base = mean(&|s| s.baseline.summary.test_error);
    let m_lin = mean(&|s| s.linear.summary.test_error);
    let m_uni = mean(&|s| s.uniform.summary.test_error);
    let ok = m_lin <= m_base && m_lin <= m_uni;
    CheckOutcome::new(
        "test error",
        ok,
        format!(
            "mean test error over {} seeds: linear {m_lin:.4} ≤ baseline {m_base:.4} \
             and ≤ uniform {m_uni:.4}",
            bundle.runs.len()
        ),
    )
}

/// Criterion: after the first learning-rate drop, the first block's mean
/// absolute weight gradient is higher under gating than in the baseline
/// for at least 60% of epochs (pooled over the shipped seeds).
pub fn check_gradient_signal(bundle: &ReferenceBundle) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let cfg = reference_config()?;
        let first_drop = *cfg.lr.milestones.first().ok_or_else(|| {
            Error::Config("reference schedule has no milestones".into())
        })?;
        let mut higher = 0usize;
        let mut total = 0usize;
        for s in &bundle.runs {
            for (b, l) in s
                .baseline
                .fit
                .history
                .iter()
                .zip(&s.linear.fit.history)
                .filter(|(b, _)| b.epoch >= first_drop)
            {
                total += 1;
                if l.mean_abs_grad_block1 > b.mean_abs_grad_block1 {
                    higher += 1;
                }
            }
        }
        let frac = higher as f64 / total as f64;
        Ok((
            frac >= 0.6,
            format!(
                "first-block |grad| higher under gating in {higher}/{total} = {frac:.2} \
                 of post-drop epochs (need ≥ 0.60)"
            ),
        ))
    };
    match run() {
        Ok((ok, detail)) => CheckOutcome::new("gradient signal", ok, detail),
        Err(e) => CheckOutcome::new("gradient signal", false, format!("error: {e}")),
    }
}

/// Criterion: the shipped sweep grid completes without a failed cell and
/// its full-survival rows reproduce the constant baseline exactly.
pub fn check_sweep_table(bundle: &ReferenceBundle) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let cfg = ExperimentConfig::from_toml_str(SWEEP_TOML)?;
        let grid = cfg
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("sweep config lacks a grid".into()))?;
        let n_depths = grid.depths.as_ref().map_or(1, Vec::len);
        let expected_rows = grid.rules.len() * grid.p_l.len() * n_depths * grid.seeds.len();

        let out_dir = PathBuf::from(std::env::temp_dir()).join(format!(
            "stochdepth-check-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or(0)
        ));
        let outcome = cmd_sweep(&cfg, &out_dir, 1)?;
        let csv_ok = out_dir.join("sweep.csv").is_file() && out_dir.join("sweep_mean.csv").is_file();
        let _ = fs::remove_dir_all(&out_dir);

        let complete = outcome.rows.len() == expected_rows
            && outcome.rows.iter().all(|r| r.error.is_none());

        // Full-survival rows must match the baseline run for their seed.
        let mut full_survival_matches = true;
        let mut checked = 0usize;
        for row in outcome.rows.iter().filter(|r| r.p_l == 1.0) {
            let base = bundle.runs.iter().find(|s| s.seed == row.seed);
            if let (Some(base), Some(test_error), Some(savings)) =
                (base, row.test_error, row.savings_frac)
            {
                checked += 1;
                full_survival_matches &= test_error == base.baseline.summary.test_error;
                full_survival_matches &= savings == 0.0;
            } else {
                full_survival_matches = false;
            }
        }

        let expected_full = grid.rules.len() * n_depths * grid.seeds.len();
        let ok = complete && csv_ok && full_survival_matches && checked == expected_full;
        Ok((
            ok,
            format!(
                "{} of {expected_rows} cells trained (tables written: {csv_ok}); \
                 {checked} full-survival rows match the baseline exactly: {full_survival_matches}",
                outcome.rows.iter().filter(|r| r.error.is_none()).count()
            ),
        ))
    };
    match run() {
        Ok((ok, detail)) => CheckOutcome::new("sweep table", ok, detail),
        Err(e) => CheckOutcome::new("sweep table", false, format!("error: {e}")),
    }
}

/// All slow checks in report order. Runs the full reference bundle
/// (fifteen trainings) plus the sweep grid; takes several minutes.
pub fn run_slow_checks() -> Vec<CheckOutcome> {
    let bundle = match run_reference_bundle() {
        Ok(b) => b,
        Err(e) => {
            let detail = format!("reference bundle failed: {e}");
            return vec![
                CheckOutcome::new("runtime savings", false, detail.clone()),
                CheckOutcome::new("test error", false, detail.clone()),
                CheckOutcome::new("gradient signal", false, detail.clone()),
                CheckOutcome::new("sweep table", false, detail),
            ];
        }
    };
    vec![
        check_runtime_savings(&bundle),
        check_test_error(&bundle),
        check_gradient_signal(&bundle),
        check_sweep_table(&bundle),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_parses_and_validates() {
        let cfg = reference_config().unwrap();
        assert_eq!(cfg.network.depth(), 54);
        assert_eq!(cfg.train.epochs, 400);
        assert_eq!(cfg.lr.milestones, vec![200, 300]);
    }

    #[test]
    fn sweep_config_parses_with_grid() {
        let cfg = ExperimentConfig::from_toml_str(SWEEP_TOML).unwrap();
        let grid = cfg.sweep.unwrap();
        assert_eq!(grid.rules.len(), 2);
        assert_eq!(grid.p_l.len(), 6);
        assert!(grid.p_l.contains(&1.0));
        assert_eq!(grid.seeds, vec![11, 14]);
    }

    #[test]
    fn sweep_seeds_are_shipped_seeds() {
        let cfg = ExperimentConfig::from_toml_str(SWEEP_TOML).unwrap();
        for seed in cfg.sweep.unwrap().seeds {
            assert!(SHIPPED_SEEDS.contains(&seed));
        }
    }
}
