//! Experiment driver for the `stochdepth` core crate: TOML-configured
//! training runs, survival-probability sweeps, a fast self-check suite,
//! and a wall-clock benchmark, shared between the `stochdepth` binary
//! and the integration tests.

pub mod accept;
pub mod bench;
pub mod check;
pub mod config;
pub mod run;
pub mod sweep;

pub use accept::{run_reference_bundle, run_slow_checks, ReferenceBundle, SHIPPED_SEEDS};
pub use bench::{cmd_bench, BenchReport};
pub use check::{print_report, run_fast_checks, CheckOutcome};
pub use config::{
    DatasetConfig, ExperimentConfig, ModeConfig, ModeKind, OptimizerConfig, SweepGrid, TrainParams,
};
pub use run::{cmd_train, run_experiment, RunSummary};
pub use sweep::{cmd_sweep, run_grid, SweepMeanRow, SweepOutcome, SweepRow};
