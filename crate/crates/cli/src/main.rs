//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 self-check
//! failure, 3 training aborted on a non-finite value.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochdepth::Error;
use stochdepth_cli::{
    cmd_bench, cmd_sweep, cmd_train, print_report, run_fast_checks, run_slow_checks,
    ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "stochdepth",
    version,
    about = "Train and analyze residual networks with stochastic depth"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run and write metrics, checkpoint, and summary files
    Train {
        /// TOML experiment config
        #[arg(long)]
        config: PathBuf,
        /// Override the config's RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `out_dir` in the config)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every cell of the config's [sweep] grid and write CSV tables
    Sweep {
        /// TOML experiment config with a [sweep] table
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed (cells still use [sweep] seeds)
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `out_dir` in the config)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for training cells in parallel
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run the self-check suite and report one line per check
    Check {
        /// Also run the reference-experiment checks (takes minutes)
        #[arg(long)]
        full: bool,
    },
    /// Compare gated against all-blocks epoch wall time
    Bench {
        /// TOML experiment config with a gated [mode]
        #[arg(long)]
        config: PathBuf,
        /// Override the config's RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Timing repeats per arm (minimum 3)
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> stochdepth::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn resolve_out_dir(
    cli_out: Option<PathBuf>,
    cfg: &ExperimentConfig,
) -> stochdepth::Result<PathBuf> {
    cli_out.or_else(|| cfg.out_dir.clone()).ok_or_else(|| {
        Error::Config("no output directory: pass --out or set `out_dir` in the config".to_string())
    })
}

fn dispatch(cmd: Cmd) -> stochdepth::Result<ExitCode> {
    match cmd {
        Cmd::Train { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let out_dir = resolve_out_dir(out, &cfg)?;
            let s = cmd_train(&cfg, &out_dir)?;
            println!(
                "selected epoch {} | val error {:.4} | test error {:.4} | wall {:.2} s | \
                 branches skipped {:.1}%",
                s.selected_epoch,
                s.val_error,
                s.test_error,
                s.total_wall_seconds,
                s.savings_frac * 100.0
            );
            println!("artifacts written to {}", out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sweep {
            config,
            seed,
            out,
            workers,
        } => {
            let cfg = load_config(&config, seed)?;
            let out_dir = resolve_out_dir(out, &cfg)?;
            let outcome = cmd_sweep(&cfg, &out_dir, workers)?;
            println!("{:<14} {:>5} {:>6} {:>6} {:>11} {:>9} {:>9}", "rule", "p_L", "depth", "seed", "test_error", "wall_s", "skipped");
            for r in &outcome.rows {
                match (&r.error, r.test_error, r.wall_seconds, r.savings_frac) {
                    (None, Some(te), Some(w), Some(sv)) => println!(
                        "{:<14} {:>5.2} {:>6} {:>6} {:>11.4} {:>9.2} {:>8.1}%",
                        r.rule, r.p_l, r.depth, r.seed, te, w, sv * 100.0
                    ),
                    _ => println!(
                        "{:<14} {:>5.2} {:>6} {:>6} failed: {}",
                        r.rule,
                        r.p_l,
                        r.depth,
                        r.seed,
                        r.error.as_deref().unwrap_or("unknown")
                    ),
                }
            }
            println!();
            println!("{:<14} {:>5} {:>6} {:>6} {:>11}", "rule", "p_L", "depth", "seeds", "mean_error");
            for m in &outcome.means {
                match m.mean_test_error {
                    Some(te) => println!(
                        "{:<14} {:>5.2} {:>6} {:>6} {:>11.4}",
                        m.rule, m.p_l, m.depth, m.seeds_ok, te
                    ),
                    None => println!(
                        "{:<14} {:>5.2} {:>6} {:>6} {:>11}",
                        m.rule, m.p_l, m.depth, m.seeds_ok, "-"
                    ),
                }
            }
            println!();
            println!("tables written to {}", out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Check { full } => {
            let mut outcomes = run_fast_checks();
            if full {
                outcomes.extend(run_slow_checks());
            }
            if print_report(&outcomes) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
        Cmd::Bench {
            config,
            seed,
            repeats,
        } => {
            let cfg = load_config(&config, seed)?;
            let report = cmd_bench(&cfg, repeats)?;
            println!("{}", report.render());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = !matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if usage_error {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFinite(_) => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}
