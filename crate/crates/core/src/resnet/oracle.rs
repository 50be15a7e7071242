//! Exhaustive gate-ensemble oracle.
//!
//! A gated network defines `2^L` deterministic subnetworks, one per gate
//! pattern. This oracle computes the exact probability-weighted mean of their
//! outputs by enumeration. For linear (probe) blocks that mean provably
//! equals the rescaled single forward pass; with ReLU and batch norm in the
//! blocks the two differ, and the gap is something to measure, not assert.

use crate::error::{Error, Result};
use crate::stochastic::{enumerate_patterns_from_probs, SurvivalSchedule};
use crate::tensor::Tensor;

use super::net::{FrozenMode, Network};

/// Probability-weighted mean of the frozen network's output over every gate
/// pattern of `schedule`. `max_depth` is a guard against accidentally
/// requesting an astronomically sized enumeration.
pub fn ensemble_oracle(
    net: &Network,
    x: &Tensor,
    schedule: &SurvivalSchedule,
    max_depth: usize,
) -> Result<Tensor> {
    let mut probs = Vec::with_capacity(schedule.depth);
    for l in 1..=schedule.depth {
        probs.push(schedule.survival_prob(l)?);
    }
    ensemble_oracle_probs(net, x, &probs, max_depth)
}

/// [`ensemble_oracle`] with one explicit survival probability per block.
pub fn ensemble_oracle_probs(
    net: &Network,
    x: &Tensor,
    probs: &[f64],
    max_depth: usize,
) -> Result<Tensor> {
    if net.depth() > max_depth {
        return Err(Error::InvalidArg(format!(
            "refusing to enumerate 2^{} subnetworks (caller allowed up to depth {max_depth})",
            net.depth()
        )));
    }
    if probs.len() != net.depth() {
        return Err(Error::InvalidArg(format!(
            "{} probabilities for {} blocks",
            probs.len(),
            net.depth()
        )));
    }
    let patterns = enumerate_patterns_from_probs(probs)?;
    let mut acc: Option<Tensor> = None;
    for (gates, weight) in &patterns {
        let y = net.forward_frozen(x, FrozenMode::Gated(gates))?;
        let contribution = y.mul_scalar(*weight);
        acc = Some(match acc {
            Some(a) => a.add(&contribution)?,
            None => contribution,
        });
    }
    acc.ok_or_else(|| Error::InvalidArg("no gate patterns".into()))
}

/// Largest relative difference between the rescaled forward pass and the
/// exhaustive ensemble mean, for reporting the approximation gap of rescaled
/// inference on nonlinear networks.
pub fn rescaled_ensemble_gap(
    net: &Network,
    x: &Tensor,
    schedule: &SurvivalSchedule,
    max_depth: usize,
) -> Result<f64> {
    let mean = ensemble_oracle(net, x, schedule, max_depth)?;
    let rescaled = net.forward_frozen(x, FrozenMode::Rescaled(schedule))?;
    let mut gap = 0.0f64;
    for (&m, &r) in mean.data().iter().zip(rescaled.data()) {
        let denom = m.abs().max(r.abs()).max(1e-8);
        gap = gap.max((m - r).abs() / denom);
    }
    Ok(gap)
}
