//! `check`: fast self-verification suite. Each check prints one
//! pass/fail line with its tolerance and the observed value, and the
//! command exits non-zero if any check fails.

use stochdepth::gradcheck::{central_diff, max_rel_err};
use stochdepth::layers::softmax_cross_entropy;
use stochdepth::resnet::{rescaled_ensemble_gap, ResBlockSpec};
use stochdepth::stochastic::{
    enumerate_patterns_from_probs, sample_gates, DecayRule, GateVector, SurvivalSchedule,
};
use stochdepth::{
    AugmentConfig, DepthMode, Flavor, GroupSpec, InputShape, Network, NetworkSpec, OptimizerState,
    ResBlock, Result, StreamSet, Tensor, TrainMode,
};

/// Central-difference step. Truncation error grows as `h²·f'''/6` and
/// batch-norm statistics at small batch sizes push third derivatives into
/// the hundreds, so `1e-5` leaves visible truncation residue; at `1e-6`
/// both truncation and cancellation noise sit near `1e-10`, well inside
/// the comparison's `1e-8` noise floor.
const FD_STEP: f64 = 1e-6;
const NET_TOL: f64 = 1e-5;
const LOSS_TOL: f64 = 1e-6;

/// One named check with its observed outcome.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub(crate) fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

fn dense_spec(blocks: usize, width: usize) -> NetworkSpec {
    NetworkSpec {
        flavor: Flavor::Dense,
        input: InputShape::Features { features: 2 },
        groups: vec![GroupSpec { blocks, width }],
        num_classes: 3,
    }
}

fn conv_spec() -> NetworkSpec {
    // Three blocks with one stride-2 transition (6×6 → 3×3).
    NetworkSpec {
        flavor: Flavor::Conv,
        input: InputShape::Image {
            channels: 1,
            height: 6,
            width: 6,
        },
        groups: vec![
            GroupSpec { blocks: 2, width: 3 },
            GroupSpec { blocks: 1, width: 6 },
        ],
        num_classes: 3,
    }
}

fn mode_of(gv: &Option<GateVector>) -> TrainMode<'_> {
    match gv {
        Some(g) => TrainMode::Gated(g),
        None => TrainMode::Constant,
    }
}

/// Shifts every parameter off its initialization value so gradient
/// checks run at a generic point (identity-start blocks would otherwise
/// have exactly-zero branch gradients).
fn jitter_params(net: &mut Network, seed: u64) {
    let mut rng = stochdepth::RngStream::new(seed, 91);
    for (_, t) in net.named_params_mut() {
        for v in t.data_mut() {
            *v += rng.uniform01() * 0.8 - 0.4;
        }
    }
}

fn random_input(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = stochdepth::RngStream::new(seed, 90);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform01() * 2.0 - 1.0).collect()).unwrap()
}

/// Max relative error between analytic and finite-difference gradients
/// of the training loss, taken over every parameter of the network.
fn net_fd_max_rel(spec: &NetworkSpec, seed: u64, gates: Option<Vec<bool>>) -> Result<f64> {
    let mut init = stochdepth::RngStream::new(seed, 0);
    let mut net = Network::init(spec.clone(), &mut init)?;
    jitter_params(&mut net, seed + 1000);
    let batch = 3;
    let x = match spec.input {
        InputShape::Features { features } => random_input(vec![batch, features], seed + 1),
        InputShape::Image {
            channels,
            height,
            width,
        } => random_input(vec![batch, channels, height, width], seed + 1),
    };
    let labels: Vec<usize> = (0..batch).map(|i| i % spec.num_classes).collect();
    let gate_vec = gates.map(|bits| GateVector {
        bits,
        minibatch_index: 0,
    });

    let (logits, trace) = net.forward_train(&x, mode_of(&gate_vec))?;
    let (_, dlogits) = softmax_cross_entropy(&logits, &labels)?;
    let analytic = net.backward(&trace, &dlogits)?;

    let mut worst: f64 = 0.0;
    let num_params = net.named_params().len();
    for pi in 0..num_params {
        let theta0 = net.named_params()[pi].1.data().to_vec();
        let mut objective = |theta: &[f64]| -> f64 {
            net.named_params_mut()[pi].1.data_mut().copy_from_slice(theta);
            let (logits, _) = net.forward_train(&x, mode_of(&gate_vec)).unwrap();
            let (loss, _) = softmax_cross_entropy(&logits, &labels).unwrap();
            loss
        };
        let numeric = central_diff(&mut objective, &theta0, FD_STEP);
        net.named_params_mut()[pi].1.data_mut().copy_from_slice(&theta0);
        worst = worst.max(max_rel_err(analytic.tensors[pi].data(), &numeric));
    }
    Ok(worst)
}

/// Criterion: analytic gradients match central finite differences over
/// 20+ random cases spanning dense, conv, batch-norm, pooling, and loss
/// paths, within 1e-5 (1e-6 for the bare loss).
pub fn check_gradients() -> CheckOutcome {
    let run = || -> Result<(f64, f64, usize)> {
        let mut worst_net: f64 = 0.0;
        let mut cases = 0;

        // Dense residual nets, gated and constant (BN + dense + loss).
        let dense_gates: [Option<Vec<bool>>; 5] = [
            None,
            Some(vec![true, true, true]),
            Some(vec![true, false, true]),
            Some(vec![false, true, true]),
            Some(vec![false, false, true]),
        ];
        for (i, gates) in dense_gates.iter().enumerate() {
            for seed in [11, 12] {
                let width = 4 + (i % 2) * 2;
                worst_net =
                    worst_net.max(net_fd_max_rel(&dense_spec(3, width), seed + i as u64, gates.clone())?);
                cases += 1;
            }
        }

        // Conv residual nets with a strided transition (conv + BN +
        // average pooling + global pooling + loss).
        let conv_gates: [Option<Vec<bool>>; 4] = [
            None,
            Some(vec![true, true, true]),
            Some(vec![true, false, true]),
            Some(vec![false, true, false]),
        ];
        for (i, gates) in conv_gates.iter().enumerate() {
            for seed in [31, 32] {
                worst_net =
                    worst_net.max(net_fd_max_rel(&conv_spec(), seed + 10 * i as u64, gates.clone())?);
                cases += 1;
            }
        }

        // Bare loss: finite differences against the returned dlogits.
        let mut worst_loss: f64 = 0.0;
        for seed in [51, 52, 53] {
            let logits = random_input(vec![4, 5], seed);
            let labels = vec![0, 2, 4, 1];
            let (_, dlogits) = softmax_cross_entropy(&logits, &labels)?;
            let mut objective = |theta: &[f64]| -> f64 {
                let t = Tensor::new(vec![4, 5], theta.to_vec()).unwrap();
                softmax_cross_entropy(&t, &labels).unwrap().0
            };
            let numeric = central_diff(&mut objective, logits.data(), FD_STEP);
            worst_loss = worst_loss.max(max_rel_err(dlogits.data(), &numeric));
            cases += 1;
        }
        Ok((worst_net, worst_loss, cases))
    };
    match run() {
        Ok((worst_net, worst_loss, cases)) => CheckOutcome::new(
            "gradient check",
            worst_net < NET_TOL && worst_loss < LOSS_TOL,
            format!(
                "{cases} cases; max rel err {worst_net:.3e} (networks, tol {NET_TOL:.0e}), \
                 {worst_loss:.3e} (loss, tol {LOSS_TOL:.0e})"
            ),
        ),
        Err(e) => CheckOutcome::new("gradient check", false, format!("error: {e}")),
    }
}

/// Negative control: a deliberately corrupted gradient must be caught
/// and attributed to the corrupted parameter.
pub fn check_negative_control() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let spec = dense_spec(3, 4);
        let mut init = stochdepth::RngStream::new(77, 0);
        let mut net = Network::init(spec, &mut init)?;
        jitter_params(&mut net, 79);
        let x = random_input(vec![3, 2], 78);
        let labels = vec![0, 1, 2];
        let (logits, trace) = net.forward_train(&x, TrainMode::Constant)?;
        let (_, dlogits) = softmax_cross_entropy(&logits, &labels)?;
        let mut grads = net.backward(&trace, &dlogits)?;

        let target = net.first_block_weight_index();
        let victim = net.named_params()[target].0.clone();
        grads.tensors[target].data_mut()[0] += 1e-3;

        let mut caught = None;
        let num_params = net.named_params().len();
        for pi in 0..num_params {
            let theta0 = net.named_params()[pi].1.data().to_vec();
            let mut objective = |theta: &[f64]| -> f64 {
                net.named_params_mut()[pi].1.data_mut().copy_from_slice(theta);
                let (logits, _) = net.forward_train(&x, TrainMode::Constant).unwrap();
                softmax_cross_entropy(&logits, &labels).unwrap().0
            };
            let numeric = central_diff(&mut objective, &theta0, FD_STEP);
            net.named_params_mut()[pi].1.data_mut().copy_from_slice(&theta0);
            if max_rel_err(grads.tensors[pi].data(), &numeric) > NET_TOL {
                caught = Some(net.named_params()[pi].0.clone());
                break;
            }
        }
        Ok((caught.as_deref() == Some(victim.as_str()), victim))
    };
    match run() {
        Ok((caught, victim)) => CheckOutcome::new(
            "negative control",
            caught,
            if caught {
                format!("corrupted gradient detected at `{victim}`")
            } else {
                format!("corruption at `{victim}` was NOT detected")
            },
        ),
        Err(e) => CheckOutcome::new("negative control", false, format!("error: {e}")),
    }
}

/// Criterion: survival schedule arithmetic is exact, including the
/// expected active-block count 40.25 for the linear rule at depth 54
/// with final survival 0.5.
pub fn check_schedule_math() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let linear = SurvivalSchedule::new(DecayRule::LinearDecay, 0.5, 54)?;
        let e_linear = linear.expected_depth();
        let s_linear = linear.savings_estimate();
        let low = SurvivalSchedule::new(DecayRule::LinearDecay, 0.2, 54)?;
        let e_low = low.expected_depth();
        let s_low = low.savings_estimate();
        let uniform = SurvivalSchedule::new(DecayRule::Uniform, 0.5, 54)?;

        let mut ok = e_linear == 40.25 && e_linear == (3.0 * 54.0 - 1.0) / 4.0;
        ok &= e_low == 32.0;
        ok &= uniform.expected_depth() == 27.0;
        ok &= s_linear == 1.0 - 40.25 / 54.0;
        ok &= s_low == 1.0 - 32.0 / 54.0;
        // Endpoints are exact for any final survival value.
        for p in [0.5, 0.3, 0.7, 0.123456789] {
            let s = SurvivalSchedule::new(DecayRule::LinearDecay, p, 54)?;
            ok &= s.survival_prob(54)? == p;
            ok &= s.survival_prob(0)? == 1.0;
        }
        Ok((
            ok,
            format!(
                "expected active blocks {e_linear} (exact 40.25), savings {s_linear:.16} / {s_low:.16}"
            ),
        ))
    };
    match run() {
        Ok((ok, detail)) => CheckOutcome::new("schedule math", ok, detail),
        Err(e) => CheckOutcome::new("schedule math", false, format!("error: {e}")),
    }
}

/// Criterion: a dropped block is a bit-exact identity that executes no
/// residual-branch work and leaves batch-norm state untouched.
pub fn check_identity_on_drop() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let mut ok = true;

        // Block level, dense and conv non-transition blocks.
        let mut rng = stochdepth::RngStream::new(5, 0);
        for (flavor, shape) in [
            (Flavor::Dense, vec![3, 4]),
            (Flavor::Conv, vec![2, 4, 6, 6]),
        ] {
            let spec = ResBlockSpec::new(flavor, 4, 4, 1)?;
            let block = ResBlock::init(spec, &mut rng)?;
            for seed in [1, 2, 3] {
                let h = random_input(shape.clone(), seed).max0();
                let out = block.forward_skipped(&h)?;
                ok &= out == h;
            }
        }

        // Network level: gating a block off must not count it as
        // executed and must not advance its batch-norm statistics.
        let spec = dense_spec(3, 4);
        let mut init = stochdepth::RngStream::new(9, 0);
        let mut net = Network::init(spec, &mut init)?;
        let state_before: Vec<(String, Tensor)> = net
            .named_state()
            .iter()
            .map(|(n, t)| (n.clone(), (*t).clone()))
            .collect();
        let x = random_input(vec![3, 2], 4);
        let gates = GateVector {
            bits: vec![true, false, true],
            minibatch_index: 0,
        };
        let (_, trace) = net.forward_train(&x, TrainMode::Gated(&gates))?;
        ok &= trace.executed_count() == 2;
        // The middle block is skipped: its batch-norm statistics must
        // be untouched, while executed blocks advance theirs.
        let state_after: Vec<(String, Tensor)> = net
            .named_state()
            .iter()
            .map(|(n, t)| (n.clone(), (*t).clone()))
            .collect();
        for ((name, before), (_, after)) in state_before.iter().zip(&state_after) {
            if name.starts_with("blocks.1.") {
                ok &= before == after;
            } else if name.ends_with("running_mean") {
                ok &= before != after;
            }
        }

        Ok((
            ok,
            "skipped blocks: output bit-identical, zero branch executions, \
             batch-norm state untouched"
                .to_string(),
        ))
    };
    match run() {
        Ok((ok, detail)) => CheckOutcome::new("identity on drop", ok, detail),
        Err(e) => CheckOutcome::new("identity on drop", false, format!("error: {e}")),
    }
}

/// Criterion: gated training with every survival probability at 1 is
/// bit-identical to constant-depth training across three epochs.
pub fn check_full_survival_equivalence() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let run_mode = |mode: DepthMode| -> Result<(Vec<Tensor>, Vec<f64>)> {
            let mut streams = StreamSet::new(17);
            let ds = stochdepth::make_spirals(16, 2, 0.1, &mut streams.data)?;
            let spec = NetworkSpec {
                flavor: Flavor::Dense,
                input: InputShape::Features { features: 2 },
                groups: vec![GroupSpec { blocks: 4, width: 6 }],
                num_classes: 2,
            };
            let mut net = Network::init(spec, &mut streams.weight_init)?;
            let mut opt = OptimizerState::for_network(&net, 0.05, 0.9, 1e-4, true)?;
            let mut losses = Vec::new();
            for epoch in 0..3 {
                let m = stochdepth::train_epoch(
                    &mut net,
                    &ds,
                    &mode,
                    &mut opt,
                    &mut streams,
                    8,
                    &AugmentConfig::disabled(),
                    epoch,
                )?;
                losses.push(m.train_loss);
            }
            let params = net
                .named_params()
                .iter()
                .map(|(_, t)| (*t).clone())
                .collect();
            Ok((params, losses))
        };

        let schedule = SurvivalSchedule::new(DecayRule::LinearDecay, 1.0, 4)?;
        let (pc, lc) = run_mode(DepthMode::Constant)?;
        let (ps, ls) = run_mode(DepthMode::Stochastic(schedule))?;
        let params_equal = pc == ps;
        let losses_equal = lc == ls;
        Ok((
            params_equal && losses_equal,
            format!(
                "3 epochs: parameters bit-identical = {params_equal}, \
                 per-epoch losses identical = {losses_equal}"
            ),
        ))
    };
    match run() {
        Ok((ok, detail)) => CheckOutcome::new("full-survival equivalence", ok, detail),
        Err(e) => CheckOutcome::new("full-survival equivalence", false, format!("error: {e}")),
    }
}

/// Criterion: for linear (probe) residual blocks, the rescaled frozen
/// pass equals the exhaustive subnetwork expectation within 1e-10, and
/// enumeration weights always sum to 1 within 1e-12.
pub fn check_ensemble_oracle() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let mut worst_gap: f64 = 0.0;
        for depth in [3, 5, 8, 10] {
            let spec = NetworkSpec {
                flavor: Flavor::Probe,
                input: InputShape::Features { features: 4 },
                groups: vec![GroupSpec {
                    blocks: depth,
                    width: 4,
                }],
                num_classes: 2,
            };
            let mut init = stochdepth::RngStream::new(100 + depth as u64, 0);
            let net = Network::init(spec, &mut init)?;
            let x = random_input(vec![2, 4], 200 + depth as u64);
            for schedule in [
                SurvivalSchedule::new(DecayRule::Uniform, 0.6, depth)?,
                SurvivalSchedule::new(DecayRule::LinearDecay, 0.5, depth)?,
                SurvivalSchedule::new(DecayRule::LinearDecay, 0.35, depth)?,
            ] {
                worst_gap = worst_gap.max(rescaled_ensemble_gap(&net, &x, &schedule, 10)?);
            }
        }

        let mut worst_sum: f64 = 0.0;
        let mut rng = stochdepth::RngStream::new(300, 0);
        for len in [1, 4, 7, 10] {
            let probs: Vec<f64> = (0..len).map(|_| rng.uniform01().max(1e-3)).collect();
            let patterns = enumerate_patterns_from_probs(&probs)?;
            let total: f64 = patterns.iter().map(|(_, w)| w).sum();
            worst_sum = worst_sum.max((total - 1.0).abs());
        }

        Ok((
            worst_gap < 1e-10 && worst_sum <= 1e-12,
            format!(
                "max rescaled-vs-enumeration gap {worst_gap:.3e} (tol 1e-10); \
                 max |Σweights − 1| = {worst_sum:.3e} (tol 1e-12)"
            ),
        ))
    };
    match run() {
        Ok((ok, detail)) => CheckOutcome::new("ensemble oracle", ok, detail),
        Err(e) => CheckOutcome::new("ensemble oracle", false, format!("error: {e}")),
    }
}

/// Criterion: the mean active-block count over 10⁵ sampled gate vectors
/// (linear rule, depth 54, final survival 0.5) lies within three
/// standard errors of 40.25.
pub fn check_depth_statistics() -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let schedule = SurvivalSchedule::new(DecayRule::LinearDecay, 0.5, 54)?;
        let n = 100_000usize;
        let mut rng = stochdepth::RngStream::new(400, stochdepth::rng::stream::GATES);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for i in 0..n {
            let gv = sample_gates(&schedule, &mut rng, i as u64)?;
            let c = gv.count_active() as f64;
            sum += c;
            sum_sq += c * c;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        let dev = (mean - 40.25).abs();
        Ok((
            dev <= 3.0 * se,
            format!("mean active blocks {mean:.4} vs 40.25, |Δ| = {dev:.4} ≤ 3·SE = {:.4}", 3.0 * se),
        ))
    };
    match run() {
        Ok((ok, detail)) => CheckOutcome::new("depth statistics", ok, detail),
        Err(e) => CheckOutcome::new("depth statistics", false, format!("error: {e}")),
    }
}

/// All fast checks in report order.
pub fn run_fast_checks() -> Vec<CheckOutcome> {
    vec![
        check_gradients(),
        check_negative_control(),
        check_schedule_math(),
        check_identity_on_drop(),
        check_full_survival_equivalence(),
        check_ensemble_oracle(),
        check_depth_statistics(),
    ]
}

/// Prints one line per check; returns true when everything passed.
pub fn print_report(outcomes: &[CheckOutcome]) -> bool {
    let mut all_ok = true;
    for o in outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag}  {} — {}", o.name, o.detail);
        all_ok &= o.passed;
    }
    all_ok
}
