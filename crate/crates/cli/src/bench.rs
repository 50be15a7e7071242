//! Wall-clock benchmark: trains one epoch with the configured gating and
//! one epoch with every block active, from identical weights and data,
//! and reports the median time ratio across repeats.

use stochdepth::{
    train_epoch, DepthMode, Error, Network, OptimizerState, Result, StreamSet,
};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub repeats: usize,
    pub constant_median_s: f64,
    pub stochastic_median_s: f64,
    /// `stochastic_median_s / constant_median_s`.
    pub ratio: f64,
    /// Fraction of residual branches skipped in the gated arm.
    pub measured_skip_frac: f64,
}

impl BenchReport {
    pub fn render(&self) -> String {
        format!(
            "epoch wall time over {} repeats:\n  all blocks    {:.6} s (median)\n  \
             gated         {:.6} s (median)\n  ratio         {:.3}\n  skipped       {:.1}% of branches",
            self.repeats,
            self.constant_median_s,
            self.stochastic_median_s,
            self.ratio,
            self.measured_skip_frac * 100.0,
        )
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

/// Runs one training epoch under `mode`, rebuilding the dataset, network,
/// and optimizer from the config seed so every arm does identical work.
fn timed_epoch(cfg: &ExperimentConfig, mode: &DepthMode) -> Result<(f64, f64)> {
    let mut streams = StreamSet::new(cfg.seed);
    let ds = cfg.dataset.build(&mut streams)?;
    let mut net = Network::init(cfg.network.clone(), &mut streams.weight_init)?;
    let fit_cfg = cfg.fit_config()?;
    let mut opt = OptimizerState::for_network(
        &net,
        fit_cfg.lr.lr_at(0),
        fit_cfg.momentum,
        fit_cfg.weight_decay,
        fit_cfg.nesterov,
    )?;
    let metrics = train_epoch(
        &mut net,
        &ds,
        mode,
        &mut opt,
        &mut streams,
        fit_cfg.batch_size,
        &fit_cfg.augment,
        0,
    )?;
    Ok((metrics.wall_seconds, metrics.block_flops_saved_frac))
}

/// Compares gated against all-blocks epoch time. The config must select a
/// gated mode; `repeats` must be at least 3 so the median has slack.
pub fn cmd_bench(cfg: &ExperimentConfig, repeats: usize) -> Result<BenchReport> {
    cfg.validate()?;
    if repeats < 3 {
        return Err(Error::InvalidArg(format!(
            "bench needs at least 3 repeats, got {repeats}"
        )));
    }
    let gated = cfg.mode.to_depth_mode(cfg.network.depth())?;
    if matches!(gated, DepthMode::Constant) {
        return Err(Error::Config(
            "bench compares gated against constant; the config selects constant mode".to_string(),
        ));
    }

    let mut const_times = Vec::with_capacity(repeats);
    let mut gated_times = Vec::with_capacity(repeats);
    let mut skip_fracs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let (t, _) = timed_epoch(cfg, &DepthMode::Constant)?;
        const_times.push(t);
        let (t, skipped) = timed_epoch(cfg, &gated)?;
        gated_times.push(t);
        skip_fracs.push(skipped);
    }

    let constant_median_s = median(const_times);
    let stochastic_median_s = median(gated_times);
    Ok(BenchReport {
        repeats,
        constant_median_s,
        stochastic_median_s,
        ratio: stochastic_median_s / constant_median_s,
        measured_skip_frac: median(skip_fracs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BENCH_TOML: &str = r#"
seed = 9

[dataset]
kind = "spirals"
n_per_class = 256
classes = 2
noise_sigma = 0.08
val_fraction = 0.15
test_fraction = 0.25

[network]
flavor = "dense"
num_classes = 2

[network.input]
kind = "features"
features = 2

[[network.groups]]
blocks = 10
width = 12

[[network.groups]]
blocks = 10
width = 16

[mode]
kind = "stochastic"
rule = "linear_decay"
p_l = 0.5

[optimizer]
momentum = 0.9
weight_decay = 1.0e-4
nesterov = true

[lr]
base_lr = 0.05

[train]
epochs = 1
batch_size = 32
"#;

    #[test]
    fn gated_epoch_is_faster_and_skips_blocks() {
        let cfg = ExperimentConfig::from_toml_str(BENCH_TOML).unwrap();
        let report = cmd_bench(&cfg, 3).unwrap();
        assert!(
            report.ratio < 0.95,
            "expected gated epoch below 0.95x, got {}",
            report.ratio
        );
        assert!(
            report.measured_skip_frac > 0.05 && report.measured_skip_frac < 0.5,
            "skip fraction {} outside the plausible band",
            report.measured_skip_frac
        );
        assert!(report.render().contains("ratio"));
    }

    #[test]
    fn constant_mode_is_rejected() {
        let toml = BENCH_TOML.replace(
            "kind = \"stochastic\"\nrule = \"linear_decay\"\np_l = 0.5",
            "kind = \"constant\"",
        );
        let cfg = ExperimentConfig::from_toml_str(&toml).unwrap();
        assert!(cmd_bench(&cfg, 3).is_err());
    }

    #[test]
    fn too_few_repeats_is_rejected() {
        let cfg = ExperimentConfig::from_toml_str(BENCH_TOML).unwrap();
        assert!(cmd_bench(&cfg, 2).is_err());
    }
}
