//! Survival schedules and Bernoulli gate sampling for residual blocks.
//!
//! Each residual block `l` (1-based, `1..=L`) survives a training mini-batch
//! with probability `p_l`. Two schedules are supported: a uniform one where
//! every block keeps the same survival probability, and a linear decay from 1
//! at the input toward `p_final` at the last block. Index 0 denotes the
//! always-active input and has survival probability 1 by convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// How survival probability varies with block index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayRule {
    /// Every block survives with the same probability `p_final`.
    Uniform,
    /// Probability falls linearly from 1 at the input to `p_final` at the
    /// last block: `p_l = 1 - (l / L) * (1 - p_final)`.
    LinearDecay,
}

impl std::fmt::Display for DecayRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecayRule::Uniform => write!(f, "uniform"),
            DecayRule::LinearDecay => write!(f, "linear_decay"),
        }
    }
}

/// Survival probabilities for a stack of `L` residual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSchedule {
    pub rule: DecayRule,
    /// Survival probability of the deepest block, in `(0, 1]`.
    #[serde(rename = "p_L")]
    pub p_final: f64,
    /// Number of residual blocks.
    #[serde(rename = "L")]
    pub depth: usize,
}

impl SurvivalSchedule {
    pub fn new(rule: DecayRule, p_final: f64, depth: usize) -> Result<Self> {
        if !p_final.is_finite() || p_final <= 0.0 || p_final > 1.0 {
            return Err(Error::InvalidArg(format!(
                "survival probability must be in (0, 1], got {p_final}"
            )));
        }
        if depth == 0 {
            return Err(Error::InvalidArg("schedule depth must be positive".into()));
        }
        Ok(SurvivalSchedule {
            rule,
            p_final,
            depth,
        })
    }

    /// Survival probability of block `l` in `0..=depth`; `l = 0` is the
    /// always-active input.
    ///
    /// The endpoint is returned literally (`survival_prob(depth) ==
    /// p_final`), not via the interpolation formula, so it is bit-exact even
    /// when `1 - (1 - p_final)` would round.
    pub fn survival_prob(&self, l: usize) -> Result<f64> {
        if l > self.depth {
            return Err(Error::InvalidArg(format!(
                "block index {l} out of range 0..={}",
                self.depth
            )));
        }
        if l == 0 {
            return Ok(1.0);
        }
        Ok(match self.rule {
            DecayRule::Uniform => self.p_final,
            DecayRule::LinearDecay => {
                if l == self.depth {
                    self.p_final
                } else {
                    1.0 - (l as f64 / self.depth as f64) * (1.0 - self.p_final)
                }
            }
        })
    }

    /// Expected number of active blocks per mini-batch: the sum of all
    /// survival probabilities.
    ///
    /// Uses compensated (Kahan) summation so the result does not pick up
    /// rounding from intermediate partial sums; sums of dyadic probabilities
    /// come out exact.
    pub fn expected_depth(&self) -> f64 {
        let mut sum = 0.0;
        let mut comp = 0.0;
        for l in 1..=self.depth {
            let p = self.survival_prob(l).expect("l in range by construction");
            let y = p - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }

    /// Expected fraction of block computations skipped per mini-batch:
    /// `1 - expected_depth / depth`.
    pub fn savings_estimate(&self) -> f64 {
        1.0 - self.expected_depth() / self.depth as f64
    }
}

/// The on/off pattern of all residual blocks for one training mini-batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateVector {
    /// `bits[l - 1]` says whether block `l` runs its residual branch.
    pub bits: Vec<bool>,
    /// Which mini-batch this pattern was drawn for.
    pub minibatch_index: u64,
}

impl GateVector {
    /// All blocks active — the constant-depth pattern.
    pub fn all_on(depth: usize, minibatch_index: u64) -> Self {
        GateVector {
            bits: vec![true; depth],
            minibatch_index,
        }
    }

    pub fn depth(&self) -> usize {
        self.bits.len()
    }

    /// Whether block `l` (1-based) runs.
    pub fn survives(&self, l: usize) -> bool {
        self.bits[l - 1]
    }

    /// Number of active blocks.
    pub fn count_active(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Draw one gate per block, in block order, from the dedicated gate stream.
pub fn sample_gates(
    schedule: &SurvivalSchedule,
    rng: &mut RngStream,
    minibatch_index: u64,
) -> Result<GateVector> {
    let mut bits = Vec::with_capacity(schedule.depth);
    for l in 1..=schedule.depth {
        let p = schedule.survival_prob(l)?;
        bits.push(rng.bernoulli(p)? == 1.0);
    }
    Ok(GateVector {
        bits,
        minibatch_index,
    })
}

/// Maximum depth accepted by [`enumerate_gate_patterns`]: `2^16` terms.
pub const MAX_ENUMERATION_DEPTH: usize = 16;

/// Every possible gate pattern together with its probability
/// `prod_l p_l^{b_l} (1 - p_l)^{1 - b_l}`.
///
/// There are `2^depth` patterns, so this is only available for small stacks.
/// The probabilities of the returned patterns sum to 1 (within rounding).
pub fn enumerate_gate_patterns(
    schedule: &SurvivalSchedule,
) -> Result<Vec<(GateVector, f64)>> {
    let mut probs = Vec::with_capacity(schedule.depth);
    for i in 1..=schedule.depth {
        probs.push(schedule.survival_prob(i)?);
    }
    enumerate_patterns_from_probs(&probs)
}

/// [`enumerate_gate_patterns`] for an explicit per-block probability vector
/// (useful when the probabilities do not follow either schedule rule).
pub fn enumerate_patterns_from_probs(probs: &[f64]) -> Result<Vec<(GateVector, f64)>> {
    let l = probs.len();
    if l == 0 || l > MAX_ENUMERATION_DEPTH {
        return Err(Error::InvalidArg(format!(
            "cannot enumerate 2^{l} gate patterns (depth must be 1..={MAX_ENUMERATION_DEPTH})"
        )));
    }
    if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArg(format!("bad survival probability {bad}")));
    }
    let mut out = Vec::with_capacity(1usize << l);
    for mask in 0u64..(1u64 << l) {
        let bits: Vec<bool> = (0..l).map(|i| mask >> i & 1 == 1).collect();
        let mut weight = 1.0;
        for (i, &b) in bits.iter().enumerate() {
            weight *= if b { probs[i] } else { 1.0 - probs[i] };
        }
        out.push((
            GateVector {
                bits,
                minibatch_index: mask,
            },
            weight,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamSet};
    use proptest::prelude::*;

    fn linear(p: f64, depth: usize) -> SurvivalSchedule {
        SurvivalSchedule::new(DecayRule::LinearDecay, p, depth).unwrap()
    }

    fn uniform(p: f64, depth: usize) -> SurvivalSchedule {
        SurvivalSchedule::new(DecayRule::Uniform, p, depth).unwrap()
    }

    #[test]
    fn construction_validates_inputs() {
        assert!(SurvivalSchedule::new(DecayRule::Uniform, 0.0, 5).is_err());
        assert!(SurvivalSchedule::new(DecayRule::Uniform, -0.1, 5).is_err());
        assert!(SurvivalSchedule::new(DecayRule::Uniform, 1.1, 5).is_err());
        assert!(SurvivalSchedule::new(DecayRule::Uniform, f64::NAN, 5).is_err());
        assert!(SurvivalSchedule::new(DecayRule::Uniform, 0.5, 0).is_err());
        assert!(SurvivalSchedule::new(DecayRule::Uniform, 1.0, 1).is_ok());
    }

    #[test]
    fn linear_decay_known_points() {
        let s = linear(0.5, 54);
        assert_eq!(s.survival_prob(54).unwrap(), 0.5);
        assert_eq!(s.survival_prob(27).unwrap(), 0.75);
        assert_eq!(s.survival_prob(0).unwrap(), 1.0);
    }

    #[test]
    fn uniform_is_flat() {
        let s = uniform(0.7, 10);
        for l in 1..=10 {
            assert_eq!(s.survival_prob(l).unwrap(), 0.7);
        }
        assert_eq!(s.survival_prob(0).unwrap(), 1.0);
    }

    #[test]
    fn endpoint_is_bit_exact_even_for_awkward_p() {
        // 1 - (1 - 0.3) rounds away from 0.3 in f64; the endpoint must not.
        for p in [0.3, 0.1, 0.7, 0.9] {
            let s = linear(p, 7);
            assert_eq!(s.survival_prob(7).unwrap().to_bits(), p.to_bits());
        }
    }

    #[test]
    fn index_out_of_range_is_an_error() {
        let s = linear(0.5, 4);
        assert!(s.survival_prob(5).is_err());
    }

    proptest! {
        #[test]
        fn linear_decay_steps_are_constant(
            depth in 2usize..200,
            p in 0.01f64..=1.0,
        ) {
            let s = linear(p, depth);
            let step0 = s.survival_prob(1).unwrap() - s.survival_prob(2).unwrap();
            for l in 1..depth {
                let d = s.survival_prob(l).unwrap() - s.survival_prob(l + 1).unwrap();
                prop_assert!((d - step0).abs() < 1e-12);
            }
        }

        #[test]
        fn probabilities_stay_in_unit_interval(
            depth in 1usize..300,
            p in 0.001f64..=1.0,
        ) {
            for rule in [DecayRule::Uniform, DecayRule::LinearDecay] {
                let s = SurvivalSchedule::new(rule, p, depth).unwrap();
                for l in 1..=depth {
                    let pl = s.survival_prob(l).unwrap();
                    prop_assert!(pl > 0.0 && pl <= 1.0);
                }
            }
        }

        #[test]
        fn savings_complement_expected_depth(
            depth in 1usize..100,
            p in 0.01f64..=1.0,
        ) {
            let s = linear(p, depth);
            let lhs = s.savings_estimate();
            let rhs = 1.0 - s.expected_depth() / depth as f64;
            prop_assert!((lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn expected_depth_exact_values() {
        // (3 * 54 - 1) / 4 = 40.25, exactly representable and exactly summed.
        assert_eq!(linear(0.5, 54).expected_depth(), 40.25);
        assert_eq!(uniform(0.5, 54).expected_depth(), 27.0);
        // 54 - 0.8 * (55 / 2) * ... = 32 exactly.
        assert_eq!(linear(0.2, 54).expected_depth(), 32.0);
    }

    #[test]
    fn savings_known_values() {
        let s = linear(0.5, 54);
        assert!((s.savings_estimate() - (1.0 - 40.25 / 54.0)).abs() < 1e-15);
        assert!((s.savings_estimate() - 0.25462962962962965).abs() < 1e-15);
        let s2 = linear(0.2, 54);
        assert!((s2.savings_estimate() - (1.0 - 32.0 / 54.0)).abs() < 1e-15);
        // p = 1 skips nothing under either rule.
        assert_eq!(uniform(1.0, 54).savings_estimate(), 0.0);
        assert_eq!(linear(1.0, 54).savings_estimate(), 0.0);
    }

    #[test]
    fn certain_survival_never_gates() {
        let s = uniform(1.0, 20);
        let mut rng = RngStream::new(3, stream::GATES);
        for i in 0..1000 {
            let g = sample_gates(&s, &mut rng, i).unwrap();
            assert_eq!(g.count_active(), 20);
        }
    }

    #[test]
    fn gate_sampling_is_reproducible() {
        let s = linear(0.5, 30);
        let mut a = RngStream::new(99, stream::GATES);
        let mut b = RngStream::new(99, stream::GATES);
        for i in 0..50 {
            assert_eq!(
                sample_gates(&s, &mut a, i).unwrap(),
                sample_gates(&s, &mut b, i).unwrap()
            );
        }
    }

    #[test]
    fn per_block_rates_match_schedule() {
        let s = linear(0.5, 54);
        let mut rng = RngStream::new(7, stream::GATES);
        let n = 10_000usize;
        let mut counts = vec![0usize; 54];
        for i in 0..n {
            let g = sample_gates(&s, &mut rng, i as u64).unwrap();
            for (c, &b) in counts.iter_mut().zip(&g.bits) {
                *c += b as usize;
            }
        }
        for l in 1..=54usize {
            let p = s.survival_prob(l).unwrap();
            let rate = counts[l - 1] as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (rate - p).abs() <= 4.0 * sigma.max(1e-9),
                "block {l}: rate {rate} vs p {p}"
            );
        }
    }

    #[test]
    fn monte_carlo_depth_matches_expectation() {
        let s = linear(0.5, 54);
        let mut rng = RngStream::new(13, stream::GATES);
        let n = 10_000usize;
        let mut total = 0usize;
        for i in 0..n {
            total += sample_gates(&s, &mut rng, i as u64).unwrap().count_active();
        }
        let mean = total as f64 / n as f64;
        // variance of the depth is sum of p(1-p)
        let var: f64 = (1..=54)
            .map(|l| {
                let p = s.survival_prob(l).unwrap();
                p * (1.0 - p)
            })
            .sum();
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - s.expected_depth()).abs() <= 4.0 * se,
            "mean {mean} vs {} (se {se})",
            s.expected_depth()
        );
    }

    #[test]
    fn gate_draws_leave_other_streams_untouched() {
        let s = linear(0.5, 54);
        let mut set = StreamSet::new(5);
        let mut fresh = StreamSet::new(5);
        for i in 0..100 {
            sample_gates(&s, &mut set.gates, i).unwrap();
        }
        for _ in 0..10 {
            assert_eq!(
                set.weight_init.uniform01().to_bits(),
                fresh.weight_init.uniform01().to_bits()
            );
            assert_eq!(
                set.shuffle.uniform01().to_bits(),
                fresh.shuffle.uniform01().to_bits()
            );
        }
    }

    #[test]
    fn enumeration_weights_sum_to_one() {
        for schedule in [linear(0.5, 10), uniform(0.37, 12), linear(0.2, 16)] {
            let pats = enumerate_gate_patterns(&schedule).unwrap();
            assert_eq!(pats.len(), 1usize << schedule.depth);
            let total: f64 = pats.iter().map(|(_, w)| w).sum();
            assert!(
                (total - 1.0).abs() < 1e-12,
                "weights sum to {total} for {schedule:?}"
            );
        }
    }

    #[test]
    fn enumeration_depth_one_mixture() {
        let s = uniform(0.3, 1);
        let pats = enumerate_gate_patterns(&s).unwrap();
        assert_eq!(pats.len(), 2);
        // mask 0 = off with weight 0.7, mask 1 = on with weight 0.3
        assert_eq!(pats[0].0.bits, vec![false]);
        assert!((pats[0].1 - 0.7).abs() < 1e-15);
        assert_eq!(pats[1].0.bits, vec![true]);
        assert!((pats[1].1 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn enumeration_rejects_deep_stacks() {
        let s = linear(0.5, 17);
        assert!(enumerate_gate_patterns(&s).is_err());
    }

    #[test]
    fn schedule_serialization_uses_documented_keys() {
        let s = linear(0.5, 54);
        let js = serde_json::to_string(&s).unwrap();
        assert!(js.contains("\"rule\":\"linear_decay\""), "{js}");
        assert!(js.contains("\"p_L\":0.5"), "{js}");
        assert!(js.contains("\"L\":54"), "{js}");
        let back: SurvivalSchedule = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);
    }
}
