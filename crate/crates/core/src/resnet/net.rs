//! Whole-network assembly: stem, residual blocks, classifier head.

use crate::error::{Error, Result};
use crate::layers::{
    global_avg_pool, global_avg_pool_backward, relu_backward, BatchNorm, BnCache, Dense,
    DenseCache,
};
use crate::rng::RngStream;
use crate::stochastic::{GateVector, SurvivalSchedule};
use crate::tensor::Tensor;

use super::block::{BlockCache, CoreLayer, CoreLayerCache, ResBlock};
use super::spec::{Flavor, InputShape, NetworkSpec};

/// Initial transform in front of the residual stack: weight layer, batch
/// norm, ReLU. Guarantees the first block sees non-negative inputs.
#[derive(Debug, Clone)]
pub struct Stem {
    pub layer: CoreLayer,
    pub bn: BatchNorm,
}

/// Forward semantics during training (batch-norm batch statistics, running
/// estimates updated).
#[derive(Debug, Clone, Copy)]
pub enum TrainMode<'a> {
    /// Every block runs — the constant-depth baseline.
    Constant,
    /// Blocks run or skip according to the mini-batch's gate vector.
    Gated(&'a GateVector),
}

/// Forward semantics on a frozen network (batch-norm running estimates, no
/// state updates anywhere).
#[derive(Debug, Clone, Copy)]
pub enum FrozenMode<'a> {
    /// Every block runs at scale 1.
    Constant,
    /// Blocks run or skip by the gate vector (used by the ensemble oracle).
    Gated(&'a GateVector),
    /// Every block runs, its branch scaled by the survival probability.
    Rescaled(&'a SurvivalSchedule),
    /// Like `Rescaled`, with one explicit scale per block.
    RescaledProbs(&'a [f64]),
}

#[derive(Debug, Clone)]
pub struct StemCache {
    cache: CoreLayerCache,
    bn: BnCache,
    /// Stem output (ReLU mask).
    r: Tensor,
}

/// Per-block record of what the forward pass did.
#[derive(Debug, Clone)]
pub enum BlockTrace {
    Executed(BlockCache),
    /// Branch skipped, plain pass-through.
    Skipped,
    /// Branch skipped on a transition block; the identity map still ran.
    SkippedTransition { h_shape: Vec<usize> },
}

/// Everything produced by a training-mode forward that the backward needs,
/// plus the execution accounting.
#[derive(Debug)]
pub struct ForwardTrace {
    stem: Option<StemCache>,
    blocks: Vec<BlockTrace>,
    /// Input shape of the global average pool (conv flavor only).
    pool_in_shape: Option<Vec<usize>>,
    head: Option<DenseCache>,
}

impl ForwardTrace {
    /// Whether block `l` (1-based) evaluated its branch.
    pub fn executed(&self, l: usize) -> bool {
        matches!(self.blocks[l - 1], BlockTrace::Executed(_))
    }

    /// Number of blocks that evaluated their branch.
    pub fn executed_count(&self) -> usize {
        self.blocks
            .iter()
            .filter(|t| matches!(t, BlockTrace::Executed(_)))
            .count()
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }
}

/// Flat parameter gradients, index-aligned with [`Network::named_params`].
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub tensors: Vec<Tensor>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        GradientSet {
            tensors: net
                .named_params()
                .iter()
                .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
                .collect(),
        }
    }

    /// Mean absolute value across every gradient entry.
    pub fn mean_abs(&self) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for t in &self.tensors {
            sum += t.data().iter().map(|v| v.abs()).sum::<f64>();
            n += t.len();
        }
        sum / n as f64
    }
}

/// A feed-forward residual network.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetworkSpec,
    pub stem: Option<Stem>,
    pub blocks: Vec<ResBlock>,
    pub head: Option<Dense>,
}

impl Network {
    /// Kaiming-initialized network; parameters are drawn from `rng` in
    /// canonical order (stem, blocks, head), so a given seed fully determines
    /// the weights.
    pub fn init(spec: NetworkSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let block_specs = spec.block_specs()?;
        let first_width = spec.groups[0].width;
        let last_width = spec.groups.last().expect("validated nonempty").width;

        let stem = match (spec.flavor, spec.input) {
            (Flavor::Conv, InputShape::Image { channels, .. }) => Some(Stem {
                layer: CoreLayer::Conv(crate::layers::Conv2d::he_init(
                    channels,
                    first_width,
                    1,
                    rng,
                )?),
                bn: BatchNorm::new(first_width),
            }),
            (Flavor::Dense, InputShape::Features { features }) => Some(Stem {
                layer: CoreLayer::Dense(Dense::he_init(features, first_width, rng)?),
                bn: BatchNorm::new(first_width),
            }),
            (Flavor::Probe, _) => None,
            _ => return Err(Error::Config("flavor/input mismatch".into())),
        };

        let mut blocks = Vec::with_capacity(block_specs.len());
        for bs in block_specs {
            blocks.push(ResBlock::init(bs, rng)?);
        }

        // The head starts at zero so the logits are exactly zero at
        // initialization (uniform class probabilities, loss ln C) no matter
        // how the feature scale accumulates across the residual stack. The
        // head picks up gradient from the first step; every class column
        // receives a distinct signal, so no symmetry survives. Consumes no
        // RNG draws.
        let head = match spec.flavor {
            Flavor::Conv | Flavor::Dense => Some(Dense::new(
                Tensor::zeros(vec![last_width, spec.num_classes]),
                Tensor::zeros(vec![spec.num_classes]),
            )?),
            Flavor::Probe => None,
        };

        Ok(Network {
            spec,
            stem,
            blocks,
            head,
        })
    }

    /// Residual block count.
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let ok = match self.spec.input {
            InputShape::Image {
                channels,
                height,
                width,
            } => {
                x.rank() == 4
                    && x.shape()[1] == channels
                    && x.shape()[2] == height
                    && x.shape()[3] == width
            }
            InputShape::Features { features } => x.rank() == 2 && x.shape()[1] == features,
        };
        if !ok {
            return Err(Error::Shape(format!(
                "input {:?} does not match {:?}",
                x.shape(),
                self.spec.input
            )));
        }
        Ok(())
    }

    fn check_gate_len(&self, len: usize) -> Result<()> {
        if len != self.depth() {
            return Err(Error::InvalidArg(format!(
                "{len} gates for {} blocks",
                self.depth()
            )));
        }
        Ok(())
    }

    /// Training-mode forward. Returns logits (probe flavor: the final block
    /// output) and the trace consumed by [`Network::backward`].
    pub fn forward_train(&mut self, x: &Tensor, mode: TrainMode) -> Result<(Tensor, ForwardTrace)> {
        self.check_input(x)?;
        if let TrainMode::Gated(g) = mode {
            self.check_gate_len(g.depth())?;
        }

        let (mut h, stem_cache) = match &mut self.stem {
            Some(stem) => {
                let (a, c) = stem.layer.forward(x)?;
                let (n, b) = stem.bn.forward_train(&a)?;
                let r = n.max0();
                (
                    r.clone(),
                    Some(StemCache { cache: c, bn: b, r }),
                )
            }
            None => (x.clone(), None),
        };

        let mut traces = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let run = match mode {
                TrainMode::Constant => true,
                TrainMode::Gated(g) => g.survives(i + 1),
            };
            if run {
                let (y, cache) = block.forward_train(&h)?;
                traces.push(BlockTrace::Executed(cache));
                h = y;
            } else if block.spec().is_transition {
                let h_shape = h.shape().to_vec();
                h = block.forward_skipped(&h)?;
                traces.push(BlockTrace::SkippedTransition { h_shape });
            } else {
                h = block.forward_skipped(&h)?;
                traces.push(BlockTrace::Skipped);
            }
        }

        let (logits, pool_in_shape, head_cache) = match &self.head {
            Some(head) => {
                let (feat, pool_shape) = if self.spec.flavor == Flavor::Conv {
                    let shape = h.shape().to_vec();
                    (global_avg_pool(&h)?, Some(shape))
                } else {
                    (h, None)
                };
                let (logits, hc) = head.forward(&feat)?;
                (logits, pool_shape, Some(hc))
            }
            None => (h, None, None),
        };

        Ok((
            logits,
            ForwardTrace {
                stem: stem_cache,
                blocks: traces,
                pool_in_shape,
                head: head_cache,
            },
        ))
    }

    /// Inference forward: running batch-norm statistics, no mutation.
    pub fn forward_frozen(&self, x: &Tensor, mode: FrozenMode) -> Result<Tensor> {
        self.check_input(x)?;
        match mode {
            FrozenMode::Gated(g) => self.check_gate_len(g.depth())?,
            FrozenMode::Rescaled(s) => self.check_gate_len(s.depth)?,
            FrozenMode::RescaledProbs(p) => self.check_gate_len(p.len())?,
            FrozenMode::Constant => {}
        }

        let mut h = match &self.stem {
            Some(stem) => {
                let (a, _) = stem.layer.forward(x)?;
                stem.bn.forward_eval(&a)?.max0()
            }
            None => x.clone(),
        };

        for (i, block) in self.blocks.iter().enumerate() {
            let l = i + 1;
            h = match mode {
                FrozenMode::Constant => block.forward_frozen(&h, 1.0)?,
                FrozenMode::Gated(g) => {
                    if g.survives(l) {
                        block.forward_frozen(&h, 1.0)?
                    } else {
                        block.forward_skipped(&h)?
                    }
                }
                FrozenMode::Rescaled(s) => block.forward_frozen(&h, s.survival_prob(l)?)?,
                FrozenMode::RescaledProbs(p) => block.forward_frozen(&h, p[i])?,
            };
        }

        match &self.head {
            Some(head) => {
                let feat = if self.spec.flavor == Flavor::Conv {
                    global_avg_pool(&h)?
                } else {
                    h
                };
                Ok(head.forward(&feat)?.0)
            }
            None => Ok(h),
        }
    }

    /// Exact gradients for the training-mode forward recorded in `trace`.
    /// Skipped blocks contribute exactly zero parameter gradients and pass
    /// the downstream gradient through their identity path.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &Tensor) -> Result<GradientSet> {
        if trace.blocks.len() != self.blocks.len() {
            return Err(Error::InvalidArg(
                "trace does not match this network".into(),
            ));
        }

        // head
        let (mut dh, head_grads) = match (&self.head, &trace.head) {
            (Some(head), Some(hc)) => {
                let (dfeat, g) = head.backward(hc, dlogits)?;
                let dh = match &trace.pool_in_shape {
                    Some(shape) => global_avg_pool_backward(&dfeat, shape)?,
                    None => dfeat,
                };
                (dh, Some(vec![g.weight, g.bias]))
            }
            (None, None) => (dlogits.clone(), None),
            _ => return Err(Error::InvalidArg("trace/head mismatch".into())),
        };

        // blocks, in reverse
        let mut block_grads: Vec<Vec<Tensor>> = vec![Vec::new(); self.blocks.len()];
        for (i, block) in self.blocks.iter().enumerate().rev() {
            match &trace.blocks[i] {
                BlockTrace::Executed(cache) => {
                    let (dprev, grads) = block.backward(cache, &dh)?;
                    block_grads[i] = grads;
                    dh = dprev;
                }
                BlockTrace::Skipped => {
                    block_grads[i] = block.zero_grads();
                }
                BlockTrace::SkippedTransition { h_shape } => {
                    block_grads[i] = block.zero_grads();
                    dh = block.backward_skipped(&dh, h_shape)?;
                }
            }
        }

        // stem
        let stem_grads = match (&self.stem, &trace.stem) {
            (Some(stem), Some(sc)) => {
                let dn = relu_backward(&dh, &sc.r);
                let (da, bn_g) = stem.bn.backward(&sc.bn, &dn)?;
                let (_, [w_g, b_g]) = stem.layer.backward(&sc.cache, &da)?;
                Some(vec![w_g, b_g, bn_g.gamma, bn_g.beta])
            }
            (None, None) => None,
            _ => return Err(Error::InvalidArg("trace/stem mismatch".into())),
        };

        let mut tensors = Vec::new();
        if let Some(g) = stem_grads {
            tensors.extend(g);
        }
        for g in block_grads {
            tensors.extend(g);
        }
        if let Some(g) = head_grads {
            tensors.extend(g);
        }

        debug_assert_eq!(tensors.len(), self.named_params().len());
        Ok(GradientSet { tensors })
    }

    /// Trainable parameters with their canonical dotted paths, in the fixed
    /// order used by gradients, the optimizer, and checkpoints.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Some(stem) = &self.stem {
            let fam = stem.layer.family();
            for (suffix, t) in stem.layer.named_params() {
                out.push((format!("stem.{fam}.{suffix}"), t));
            }
            out.push(("stem.bn.gamma".to_string(), &stem.bn.gamma));
            out.push(("stem.bn.beta".to_string(), &stem.bn.beta));
        }
        for (i, block) in self.blocks.iter().enumerate() {
            for (name, t) in block.named_params() {
                out.push((format!("blocks.{i}.{name}"), t));
            }
        }
        if let Some(head) = &self.head {
            out.push(("head.weight".to_string(), &head.weight));
            out.push(("head.bias".to_string(), &head.bias));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        if let Some(stem) = &mut self.stem {
            let fam = stem.layer.family();
            let [p1, p2] = stem.layer.named_params_mut();
            out.push((format!("stem.{fam}.{}", p1.0), p1.1));
            out.push((format!("stem.{fam}.{}", p2.0), p2.1));
            out.push(("stem.bn.gamma".to_string(), &mut stem.bn.gamma));
            out.push(("stem.bn.beta".to_string(), &mut stem.bn.beta));
        }
        for (i, block) in self.blocks.iter_mut().enumerate() {
            for (name, t) in block.named_params_mut() {
                out.push((format!("blocks.{i}.{name}"), t));
            }
        }
        if let Some(head) = &mut self.head {
            out.push(("head.weight".to_string(), &mut head.weight));
            out.push(("head.bias".to_string(), &mut head.bias));
        }
        out
    }

    /// Non-trainable state (batch-norm running statistics) with canonical
    /// paths.
    pub fn named_state(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Some(stem) = &self.stem {
            out.push(("stem.bn.running_mean".to_string(), &stem.bn.running_mean));
            out.push(("stem.bn.running_var".to_string(), &stem.bn.running_var));
        }
        for (i, block) in self.blocks.iter().enumerate() {
            for (name, t) in block.named_state() {
                out.push((format!("blocks.{i}.{name}"), t));
            }
        }
        out
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        if let Some(stem) = &mut self.stem {
            out.push((
                "stem.bn.running_mean".to_string(),
                &mut stem.bn.running_mean,
            ));
            out.push(("stem.bn.running_var".to_string(), &mut stem.bn.running_var));
        }
        for (i, block) in self.blocks.iter_mut().enumerate() {
            for (name, t) in block.named_state_mut() {
                out.push((format!("blocks.{i}.{name}"), t));
            }
        }
        out
    }

    /// Index (into the canonical parameter order) of the first block's first
    /// weight tensor — the usual probe for gradient-magnitude tracking.
    pub fn first_block_weight_index(&self) -> usize {
        if self.stem.is_some() {
            4
        } else {
            0
        }
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::softmax_cross_entropy;
    use crate::resnet::spec::GroupSpec;
    use crate::stochastic::{sample_gates, DecayRule};

    fn tiny_dense_spec() -> NetworkSpec {
        NetworkSpec {
            flavor: Flavor::Dense,
            input: InputShape::Features { features: 2 },
            groups: vec![GroupSpec { blocks: 3, width: 4 }],
            num_classes: 3,
        }
    }

    fn two_group_dense_spec() -> NetworkSpec {
        NetworkSpec {
            flavor: Flavor::Dense,
            input: InputShape::Features { features: 2 },
            groups: vec![
                GroupSpec { blocks: 2, width: 4 },
                GroupSpec { blocks: 2, width: 6 },
            ],
            num_classes: 3,
        }
    }

    fn gates(bits: &[bool]) -> GateVector {
        GateVector {
            bits: bits.to_vec(),
            minibatch_index: 0,
        }
    }

    #[test]
    fn conv_reference_architecture_shapes() {
        let spec = NetworkSpec {
            flavor: Flavor::Conv,
            input: InputShape::Image {
                channels: 3,
                height: 32,
                width: 32,
            },
            groups: vec![
                GroupSpec { blocks: 18, width: 16 },
                GroupSpec { blocks: 18, width: 32 },
                GroupSpec { blocks: 18, width: 64 },
            ],
            num_classes: 10,
        };
        let mut rng = RngStream::new(0, 0);
        let net = Network::init(spec, &mut rng).unwrap();
        assert_eq!(net.depth(), 54);
        let x = rng.draw_uniform01(vec![1, 3, 32, 32]);
        let logits = net.forward_frozen(&x, FrozenMode::Constant).unwrap();
        assert_eq!(logits.shape(), &[1, 10]);
    }

    #[test]
    fn all_ones_gating_equals_constant_depth() {
        let mut rng = RngStream::new(1, 0);
        let net0 = Network::init(tiny_dense_spec(), &mut rng).unwrap();
        let mut a = net0.clone();
        let mut b = net0;
        let x = rng.draw_uniform01(vec![5, 2]);
        let g = gates(&[true, true, true]);
        let (la, _) = a.forward_train(&x, TrainMode::Constant).unwrap();
        let (lb, _) = b.forward_train(&x, TrainMode::Gated(&g)).unwrap();
        assert_eq!(la, lb);
        // running statistics advanced identically
        for ((_, sa), (_, sb)) in a.named_state().iter().zip(b.named_state().iter()) {
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn rescaled_with_certain_survival_equals_plain_eval() {
        let mut rng = RngStream::new(2, 0);
        let net = Network::init(two_group_dense_spec(), &mut rng).unwrap();
        let x = rng.draw_uniform01(vec![3, 2]);
        let s = SurvivalSchedule::new(DecayRule::Uniform, 1.0, 4).unwrap();
        let a = net.forward_frozen(&x, FrozenMode::Constant).unwrap();
        let b = net.forward_frozen(&x, FrozenMode::Rescaled(&s)).unwrap();
        for (va, vb) in a.data().iter().zip(b.data()) {
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn all_zero_gates_reduce_to_stem_transitions_head() {
        let mut rng = RngStream::new(3, 0);
        let net = Network::init(two_group_dense_spec(), &mut rng).unwrap();
        let x = rng.draw_uniform01(vec![2, 2]);
        let g = gates(&[false, false, false, false]);
        let got = net.forward_frozen(&x, FrozenMode::Gated(&g)).unwrap();

        // by hand: stem eval -> pad 4 -> 6 at the transition -> head
        let stem = net.stem.as_ref().unwrap();
        let (a, _) = stem.layer.forward(&x).unwrap();
        let h = stem.bn.forward_eval(&a).unwrap().max0();
        let padded = super::super::block::identity_path(net.blocks[2].spec(), &h).unwrap();
        let (want, _) = net.head.as_ref().unwrap().forward(&padded).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn trace_counts_executed_blocks() {
        let mut rng = RngStream::new(4, 0);
        let mut net = Network::init(tiny_dense_spec(), &mut rng).unwrap();
        let x = rng.draw_uniform01(vec![4, 2]);
        let g = gates(&[true, false, true]);
        let (_, trace) = net.forward_train(&x, TrainMode::Gated(&g)).unwrap();
        assert_eq!(trace.executed_count(), 2);
        assert!(trace.executed(1));
        assert!(!trace.executed(2));
        assert!(trace.executed(3));
    }

    #[test]
    fn skipped_blocks_get_exactly_zero_gradients() {
        let mut rng = RngStream::new(5, 0);
        let mut net = Network::init(tiny_dense_spec(), &mut rng).unwrap();
        let x = rng.draw_uniform01(vec![4, 2]);
        let labels = [0usize, 1, 2, 0];
        let g = gates(&[false, false, false]);
        let (logits, trace) = net.forward_train(&x, TrainMode::Gated(&g)).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&logits, &labels).unwrap();
        let grads = net.backward(&trace, &dlogits).unwrap();
        let names: Vec<String> = net.named_params().iter().map(|(n, _)| n.clone()).collect();
        let mut saw_nonzero_elsewhere = false;
        for (name, g) in names.iter().zip(&grads.tensors) {
            if name.starts_with("blocks.") {
                assert!(
                    g.data().iter().all(|&v| v == 0.0),
                    "{name} should have zero grad"
                );
            } else if g.data().iter().any(|&v| v != 0.0) {
                saw_nonzero_elsewhere = true;
            }
        }
        assert!(saw_nonzero_elsewhere, "stem/head grads all zero?");
    }

    #[test]
    fn gated_block_one_gradient_matches_constant_depth() {
        let mut rng = RngStream::new(6, 0);
        let net0 = Network::init(tiny_dense_spec(), &mut rng).unwrap();
        let x = rng.draw_uniform01(vec![4, 2]);
        let labels = [0usize, 1, 2, 0];
        let g = gates(&[true, true, true]);

        let run = |mut net: Network, mode_gated: bool| -> GradientSet {
            let mode = if mode_gated {
                TrainMode::Gated(&g)
            } else {
                TrainMode::Constant
            };
            let (logits, trace) = net.forward_train(&x, mode).unwrap();
            let (_, dlogits) = softmax_cross_entropy(&logits, &labels).unwrap();
            net.backward(&trace, &dlogits).unwrap()
        };
        let ga = run(net0.clone(), true);
        let gb = run(net0, false);
        for (a, b) in ga.tensors.iter().zip(&gb.tensors) {
            for (va, vb) in a.data().iter().zip(b.data()) {
                assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
    }

    #[test]
    fn full_net_gradients_match_finite_differences() {
        // Three dense blocks of width 4, gates [1, 0, 1], real loss.
        let mut rng = RngStream::new(7, 0);
        let mut net = Network::init(tiny_dense_spec(), &mut rng).unwrap();
        // Move off the identity-start point so every parameter has a
        // non-trivial gradient.
        for (_, t) in net.named_params_mut() {
            for v in t.data_mut() {
                *v += rng.uniform01() * 0.8 - 0.4;
            }
        }
        let net = net;
        let x = rng.draw_uniform01(vec![4, 2]);
        let labels = [0usize, 1, 2, 0];
        let g = gates(&[true, false, true]);

        let mut work = net.clone();
        let (logits, trace) = work.forward_train(&x, TrainMode::Gated(&g)).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&logits, &labels).unwrap();
        let grads = work.backward(&trace, &dlogits).unwrap();
        let analytic: Vec<f64> = grads
            .tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect();

        let theta: Vec<f64> = net
            .named_params()
            .iter()
            .flat_map(|(_, t)| t.data().iter().copied())
            .collect();
        let mut f = |t: &[f64]| {
            let mut n = net.clone();
            let mut off = 0;
            for (_, p) in n.named_params_mut() {
                let len = p.len();
                p.data_mut().copy_from_slice(&t[off..off + len]);
                off += len;
            }
            let (logits, _) = n.forward_train(&x, TrainMode::Gated(&g)).unwrap();
            softmax_cross_entropy(&logits, &labels).unwrap().0
        };
        let numeric = crate::gradcheck::central_diff(&mut f, &theta, 1e-5);
        let err = crate::gradcheck::max_rel_err(&analytic, &numeric);
        assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn deterministic_init_given_stream() {
        let a = Network::init(tiny_dense_spec(), &mut RngStream::new(11, 0)).unwrap();
        let b = Network::init(tiny_dense_spec(), &mut RngStream::new(11, 0)).unwrap();
        for ((_, ta), (_, tb)) in a.named_params().iter().zip(b.named_params().iter()) {
            for (va, vb) in ta.data().iter().zip(tb.data()) {
                assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
    }

    #[test]
    fn param_names_are_stable_and_unique() {
        let mut rng = RngStream::new(12, 0);
        let net = Network::init(two_group_dense_spec(), &mut rng).unwrap();
        let names: Vec<String> = net.named_params().iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(names[0], "stem.dense.weight");
        assert_eq!(names[4], "blocks.0.dense1.weight");
        assert_eq!(
            names.last().unwrap(),
            "head.bias"
        );
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len(), "duplicate parameter names");
        // 4 stem + 4 blocks * 8 + 2 head
        assert_eq!(names.len(), 38);
        assert_eq!(net.first_block_weight_index(), 4);
        assert_eq!(names[net.first_block_weight_index()], "blocks.0.dense1.weight");
    }

    #[test]
    fn rejects_wrong_gate_length() {
        let mut rng = RngStream::new(13, 0);
        let mut net = Network::init(tiny_dense_spec(), &mut rng).unwrap();
        let x = rng.draw_uniform01(vec![2, 2]);
        let g = gates(&[true, true]);
        assert!(net.forward_train(&x, TrainMode::Gated(&g)).is_err());
    }

    #[test]
    fn gated_sampling_runs_end_to_end() {
        let mut rng = RngStream::new(14, 0);
        let mut net = Network::init(two_group_dense_spec(), &mut rng).unwrap();
        let schedule = SurvivalSchedule::new(DecayRule::LinearDecay, 0.5, 4).unwrap();
        let mut gate_rng = RngStream::new(14, 1);
        let x = rng.draw_uniform01(vec![4, 2]);
        for mb in 0..20 {
            let g = sample_gates(&schedule, &mut gate_rng, mb).unwrap();
            let (logits, trace) = net.forward_train(&x, TrainMode::Gated(&g)).unwrap();
            assert_eq!(logits.shape(), &[4, 3]);
            assert_eq!(trace.executed_count(), g.count_active());
        }
    }
}
