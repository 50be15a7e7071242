//! The optimization loop: SGD with Nesterov momentum and weight decay,
//! a step learning-rate schedule with optional warm-up, per-epoch
//! instrumentation, and validation-based model selection.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{augment_minibatch, AugmentConfig, Dataset, Split};
use crate::error::{Error, Result};
use crate::layers::{error_rate, softmax_cross_entropy};
use crate::resnet::{FrozenMode, GradientSet, Network, TrainMode};
use crate::rng::StreamSet;
use crate::stochastic::{sample_gates, SurvivalSchedule};
use crate::tensor::Tensor;

/// Whether residual blocks run unconditionally or under sampled gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthMode {
    /// Every block executes in every minibatch; evaluation is plain.
    Constant,
    /// Blocks execute under per-minibatch Bernoulli gates during training;
    /// evaluation rescales each residual branch by its survival
    /// probability.
    Stochastic(SurvivalSchedule),
}

impl DepthMode {
    pub fn schedule(&self) -> Option<&SurvivalSchedule> {
        match self {
            DepthMode::Constant => None,
            DepthMode::Stochastic(s) => Some(s),
        }
    }
}

/// SGD state: one velocity buffer per parameter tensor plus the scalar
/// hyperparameters.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    velocity: Vec<Tensor>,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
}

impl OptimizerState {
    /// Builds zeroed velocity buffers for the given parameter shapes.
    pub fn new(
        shapes: &[Vec<usize>],
        lr: f64,
        momentum: f64,
        weight_decay: f64,
        nesterov: bool,
    ) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::InvalidArg(format!(
                "learning rate must be positive and finite, got {lr}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArg(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        if !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(Error::InvalidArg(format!(
                "weight decay must be non-negative and finite, got {weight_decay}"
            )));
        }
        Ok(OptimizerState {
            velocity: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            lr,
            momentum,
            weight_decay,
            nesterov,
        })
    }

    /// Velocity buffers shaped after a network's parameters.
    pub fn for_network(
        net: &Network,
        lr: f64,
        momentum: f64,
        weight_decay: f64,
        nesterov: bool,
    ) -> Result<Self> {
        let shapes: Vec<Vec<usize>> = net
            .named_params()
            .iter()
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        OptimizerState::new(&shapes, lr, momentum, weight_decay, nesterov)
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    /// Applies one SGD update to a single parameter tensor.
    ///
    /// Update form (zero dampening):
    /// `g ← grad + weight_decay·θ`; `v ← momentum·v − lr·g`; then
    /// `θ ← θ + momentum·v − lr·g` with Nesterov or `θ ← θ + v` without.
    /// Weight decay contributes to `g` for every parameter, so tensors
    /// with all-zero gradients (skipped blocks) still shrink.
    pub fn step_param(&mut self, index: usize, theta: &mut Tensor, grad: &Tensor) -> Result<()> {
        if index >= self.velocity.len() {
            return Err(Error::InvalidArg(format!(
                "parameter index {index} out of range ({} velocity buffers)",
                self.velocity.len()
            )));
        }
        let v = &mut self.velocity[index];
        if v.shape() != theta.shape() || theta.shape() != grad.shape() {
            return Err(Error::Shape(format!(
                "sgd_step shape mismatch at parameter {index}: θ {:?}, grad {:?}, velocity {:?}",
                theta.shape(),
                grad.shape(),
                v.shape()
            )));
        }
        let (lr, m, wd) = (self.lr, self.momentum, self.weight_decay);
        let vd = v.data_mut();
        let td = theta.data_mut();
        let gd = grad.data();
        for i in 0..td.len() {
            let g = gd[i] + wd * td[i];
            vd[i] = m * vd[i] - lr * g;
            if self.nesterov {
                td[i] += m * vd[i] - lr * g;
            } else {
                td[i] += vd[i];
            }
        }
        Ok(())
    }
}

/// One SGD update across all network parameters, index-aligned with
/// [`Network::named_params`].
pub fn sgd_step(net: &mut Network, grads: &GradientSet, opt: &mut OptimizerState) -> Result<()> {
    let params = net.named_params_mut();
    if params.len() != grads.tensors.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradient tensors",
            params.len(),
            grads.tensors.len()
        )));
    }
    for (i, (_, theta)) in params.into_iter().enumerate() {
        opt.step_param(i, theta, &grads.tensors[i])?;
    }
    Ok(())
}

/// Optional fixed learning rate for the first few epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Warmup {
    pub epochs: usize,
    pub lr: f64,
}

/// Step decay: `base_lr` multiplied by `factor` after each milestone
/// epoch, with an optional warm-up phase before the schedule starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    #[serde(default)]
    pub milestones: Vec<usize>,
    #[serde(default = "default_factor")]
    pub factor: f64,
    #[serde(default)]
    pub warmup: Option<Warmup>,
}

fn default_factor() -> f64 {
    0.1
}

impl LrSchedule {
    pub fn new(
        base_lr: f64,
        milestones: Vec<usize>,
        factor: f64,
        warmup: Option<Warmup>,
    ) -> Result<Self> {
        let s = LrSchedule {
            base_lr,
            milestones,
            factor,
            warmup,
        };
        s.validate()?;
        Ok(s)
    }

    /// Constant learning rate (no milestones, no warm-up).
    pub fn constant(base_lr: f64) -> Result<Self> {
        LrSchedule::new(base_lr, Vec::new(), 0.1, None)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config(format!(
                "base_lr must be positive and finite, got {}",
                self.base_lr
            )));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::Config(format!(
                "lr factor must lie strictly between 0 and 1, got {}",
                self.factor
            )));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "milestones must be strictly increasing, got {:?}",
                self.milestones
            )));
        }
        if let Some(w) = &self.warmup {
            if !(w.lr.is_finite() && w.lr > 0.0) {
                return Err(Error::Config(format!(
                    "warmup lr must be positive and finite, got {}",
                    w.lr
                )));
            }
        }
        Ok(())
    }

    /// Learning rate for a 0-indexed epoch: the warm-up lr during the
    /// first `warmup.epochs` epochs, otherwise
    /// `base_lr · factor^(milestones at or before the epoch)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if let Some(w) = &self.warmup {
            if epoch < w.epochs {
                return w.lr;
            }
        }
        let passed = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base_lr * self.factor.powi(passed as i32)
    }
}

/// Everything measured during one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_error: f64,
    pub test_error: f64,
    /// Mean |gradient| of the first residual block's first weight layer,
    /// averaged over every minibatch (zeros included when the block was
    /// skipped).
    pub mean_abs_grad_block1: f64,
    /// Residual branches actually executed this epoch.
    pub blocks_executed: u64,
    /// `1 − executed / (L · minibatches)`: the fraction of residual
    /// branch computation skipped.
    pub block_flops_saved_frac: f64,
    /// Wall time of the training loop only (evaluation excluded), so
    /// mode-to-mode comparisons measure the cost of gradient steps.
    pub wall_seconds: f64,
}

/// Hyperparameters for [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: DepthMode,
    pub lr: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    #[serde(default)]
    pub augment: AugmentConfig,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".to_string()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2 (batch statistics need two samples), got {}",
                self.batch_size
            )));
        }
        self.lr.validate()?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative and finite, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Snapshot taken at the end of the selected epoch.
    pub best: Checkpoint,
    pub history: Vec<EpochMetrics>,
    /// Epoch with the lowest validation error (earliest on ties).
    pub selected_epoch: usize,
    pub val_error: f64,
    /// Test error recorded at the selected epoch.
    pub test_error: f64,
}

/// Index of the smallest value; ties resolve to the earliest index.
pub fn select_best(val_errors: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in val_errors.iter().enumerate() {
        if best.is_none_or(|b| v < val_errors[b]) {
            best = Some(i);
        }
    }
    best
}

/// Runs one training epoch and evaluates the val and test splits.
///
/// Training data is reshuffled every epoch (shuffle stream). Per
/// minibatch: gates are sampled (gate stream, stochastic mode only),
/// augmentation applies (augment stream), then forward, loss, backward,
/// and one SGD step. A non-finite loss aborts immediately with a
/// diagnostic. A trailing minibatch of one sample is dropped because
/// batch statistics need at least two. Splits without samples fall back
/// to the train split (val) or the val figure (test) so the record stays
/// dense.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    net: &mut Network,
    ds: &Dataset,
    mode: &DepthMode,
    opt: &mut OptimizerState,
    streams: &mut StreamSet,
    batch_size: usize,
    augment: &AugmentConfig,
    epoch: usize,
) -> Result<EpochMetrics> {
    if batch_size < 2 {
        return Err(Error::InvalidArg(format!(
            "batch_size must be at least 2, got {batch_size}"
        )));
    }
    if augment.is_enabled() && ds.inputs().rank() != 4 {
        return Err(Error::InvalidArg(
            "augmentation requires image-shaped inputs".to_string(),
        ));
    }
    let mut train_idx = ds.indices_of(Split::Train);
    if train_idx.len() < 2 {
        return Err(Error::Data(format!(
            "train split has {} samples; need at least 2",
            train_idx.len()
        )));
    }

    let started = Instant::now();
    streams.shuffle.shuffle(&mut train_idx);

    let depth = net.depth() as u64;
    let num_batches = {
        let full = train_idx.len() / batch_size;
        let rem = train_idx.len() % batch_size;
        full + usize::from(rem >= 2)
    };

    let mut loss_sum = 0.0;
    let mut grad1_sum = 0.0;
    let mut executed: u64 = 0;
    let mut batches: u64 = 0;

    for (bi, chunk) in train_idx.chunks(batch_size).enumerate() {
        if chunk.len() < 2 {
            break; // trailing single sample: batch statistics undefined
        }
        let (mut x, y) = ds.gather(chunk)?;
        if augment.is_enabled() {
            x = augment_minibatch(&x, augment, &mut streams.augment)?;
        }

        let minibatch_index = epoch as u64 * num_batches as u64 + bi as u64;
        let (logits, trace) = match mode {
            DepthMode::Constant => net.forward_train(&x, TrainMode::Constant)?,
            DepthMode::Stochastic(schedule) => {
                let gates = sample_gates(schedule, &mut streams.gates, minibatch_index)?;
                net.forward_train(&x, TrainMode::Gated(&gates))?
            }
        };
        executed += trace.executed_count() as u64;

        let (loss, dlogits) = softmax_cross_entropy(&logits, &y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss became {loss} at epoch {epoch}, minibatch {bi}"
            )));
        }
        loss_sum += loss;

        let grads = net.backward(&trace, &dlogits)?;
        grad1_sum += grads.tensors[net.first_block_weight_index()].mean_abs();
        sgd_step(net, &grads, opt)?;
        batches += 1;
    }
    let wall_seconds = started.elapsed().as_secs_f64();

    let total_slots = depth * batches;
    let val_error = if ds.split_len(Split::Val) > 0 {
        evaluate(net, ds, Split::Val, mode, batch_size)?
    } else {
        evaluate(net, ds, Split::Train, mode, batch_size)?
    };
    let test_error = if ds.split_len(Split::Test) > 0 {
        evaluate(net, ds, Split::Test, mode, batch_size)?
    } else {
        val_error
    };

    Ok(EpochMetrics {
        epoch,
        train_loss: loss_sum / batches as f64,
        val_error,
        test_error,
        mean_abs_grad_block1: grad1_sum / batches as f64,
        blocks_executed: executed,
        block_flops_saved_frac: 1.0 - executed as f64 / total_slots as f64,
        wall_seconds,
    })
}

/// Mean 0/1 error on one split, evaluated deterministically in frozen
/// mode: residual branches are rescaled by their survival probabilities
/// in stochastic mode, or run as-is in constant mode.
pub fn evaluate(
    net: &Network,
    ds: &Dataset,
    split: Split,
    mode: &DepthMode,
    batch_size: usize,
) -> Result<f64> {
    let idx = ds.indices_of(split);
    if idx.is_empty() {
        return Err(Error::Data(format!("evaluate: split {split:?} is empty")));
    }
    let mut wrong = 0usize;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = ds.gather(chunk)?;
        let logits = match mode {
            DepthMode::Constant => net.forward_frozen(&x, FrozenMode::Constant)?,
            DepthMode::Stochastic(schedule) => {
                net.forward_frozen(&x, FrozenMode::Rescaled(schedule))?
            }
        };
        wrong += (error_rate(&logits, &y)? * y.len() as f64).round() as usize;
    }
    Ok(wrong as f64 / idx.len() as f64)
}

/// Trains for `cfg.epochs` epochs, applying the learning-rate schedule
/// each epoch, and selects the epoch with the lowest validation error
/// (earliest on ties). Returns the checkpoint captured at the end of
/// that epoch together with the full metrics history.
pub fn fit(
    net: &mut Network,
    ds: &Dataset,
    cfg: &FitConfig,
    streams: &mut StreamSet,
) -> Result<FitResult> {
    cfg.validate()?;
    if let DepthMode::Stochastic(s) = &cfg.mode {
        if s.depth != net.depth() {
            return Err(Error::Config(format!(
                "schedule depth {} does not match network depth {}",
                s.depth,
                net.depth()
            )));
        }
    }
    let mut opt = OptimizerState::for_network(
        net,
        cfg.lr.lr_at(0),
        cfg.momentum,
        cfg.weight_decay,
        cfg.nesterov,
    )?;

    let mut history: Vec<EpochMetrics> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Checkpoint)> = None;
    for epoch in 0..cfg.epochs {
        opt.lr = cfg.lr.lr_at(epoch);
        let metrics = train_epoch(
            net,
            ds,
            &cfg.mode,
            &mut opt,
            streams,
            cfg.batch_size,
            &cfg.augment,
            epoch,
        )?;
        let improved = best
            .as_ref()
            .is_none_or(|(_, best_val, _)| metrics.val_error < *best_val);
        if improved {
            best = Some((
                epoch,
                metrics.val_error,
                Checkpoint::capture(net, cfg.mode.schedule(), streams),
            ));
        }
        history.push(metrics);
    }

    let (selected_epoch, val_error, checkpoint) =
        best.expect("epochs >= 1 guarantees at least one epoch record");
    debug_assert_eq!(
        select_best(&history.iter().map(|m| m.val_error).collect::<Vec<_>>()),
        Some(selected_epoch)
    );
    Ok(FitResult {
        best: checkpoint,
        test_error: history[selected_epoch].test_error,
        history,
        selected_epoch,
        val_error,
    })
}
