//! Residual blocks with a gateable branch.
//!
//! A standard block computes `relu(branch(h) + identity(h))` where the branch
//! is layer-norm-relu-layer-norm (conv or dense layers) and the identity path
//! is `h` itself, or a pool-and-pad map when the block changes shape. When a
//! block's gate is off, the branch is never evaluated: the output is the
//! identity path verbatim (bit-exact, no normalization statistics touched).
//! The input is elementwise non-negative by construction (stem and blocks end
//! in ReLU), so skipping the final ReLU on that path changes nothing.
//!
//! Probe blocks (`h + w(h)`, no normalization, no ReLU) are the linear
//! setting in which rescaled inference equals the exact gate-ensemble
//! average; they exist to make that claim testable.

use crate::error::{Error, Result};
use crate::layers::{
    avg_pool_2x2, avg_pool_2x2_backward, relu_backward, BatchNorm, BnCache, Conv2d, ConvCache,
    Dense, DenseCache,
};
use crate::rng::RngStream;
use crate::tensor::Tensor;

use super::spec::{Flavor, ResBlockSpec};

/// A weight layer of either family.
#[derive(Debug, Clone)]
pub enum CoreLayer {
    Conv(Conv2d),
    Dense(Dense),
}

#[derive(Debug, Clone)]
pub enum CoreLayerCache {
    Conv(ConvCache),
    Dense(DenseCache),
}

impl CoreLayer {
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, CoreLayerCache)> {
        match self {
            CoreLayer::Conv(c) => {
                let (y, cache) = c.forward(x)?;
                Ok((y, CoreLayerCache::Conv(cache)))
            }
            CoreLayer::Dense(d) => {
                let (y, cache) = d.forward(x)?;
                Ok((y, CoreLayerCache::Dense(cache)))
            }
        }
    }

    /// Returns `(dx, [d_weight, d_bias])`.
    pub fn backward(&self, cache: &CoreLayerCache, dy: &Tensor) -> Result<(Tensor, [Tensor; 2])> {
        match (self, cache) {
            (CoreLayer::Conv(c), CoreLayerCache::Conv(cache)) => {
                let (dx, g) = c.backward(cache, dy)?;
                Ok((dx, [g.kernel, g.bias]))
            }
            (CoreLayer::Dense(d), CoreLayerCache::Dense(cache)) => {
                let (dx, g) = d.backward(cache, dy)?;
                Ok((dx, [g.weight, g.bias]))
            }
            _ => Err(Error::InvalidArg("layer/cache family mismatch".into())),
        }
    }

    /// `(weight, bias)` with the family's field names.
    pub fn named_params(&self) -> [(&'static str, &Tensor); 2] {
        match self {
            CoreLayer::Conv(c) => [("kernel", &c.kernel), ("bias", &c.bias)],
            CoreLayer::Dense(d) => [("weight", &d.weight), ("bias", &d.bias)],
        }
    }

    pub fn named_params_mut(&mut self) -> [(&'static str, &mut Tensor); 2] {
        match self {
            CoreLayer::Conv(c) => [("kernel", &mut c.kernel), ("bias", &mut c.bias)],
            CoreLayer::Dense(d) => [("weight", &mut d.weight), ("bias", &mut d.bias)],
        }
    }

    /// Prefix used in parameter paths ("conv" or "dense").
    pub fn family(&self) -> &'static str {
        match self {
            CoreLayer::Conv(_) => "conv",
            CoreLayer::Dense(_) => "dense",
        }
    }
}

/// One residual block.
#[derive(Debug, Clone)]
pub enum ResBlock {
    Standard {
        spec: ResBlockSpec,
        f1: CoreLayer,
        bn1: BatchNorm,
        f2: CoreLayer,
        bn2: BatchNorm,
    },
    Probe {
        spec: ResBlockSpec,
        linear: Dense,
    },
}

/// Everything the backward pass needs from an executed block.
#[derive(Debug, Clone)]
pub enum BlockCache {
    Standard {
        c1: CoreLayerCache,
        b1: BnCache,
        /// Output of the inner ReLU (mask for its backward).
        r1: Tensor,
        c2: CoreLayerCache,
        b2: BnCache,
        /// Block output (mask for the final ReLU's backward).
        y: Tensor,
        /// Input shape, needed to reverse the transition identity.
        h_shape: Vec<usize>,
    },
    Probe {
        cache: DenseCache,
    },
}

impl ResBlock {
    pub fn init(spec: ResBlockSpec, rng: &mut RngStream) -> Result<Self> {
        // Non-transition blocks start with the closing normalization scale
        // at zero, making each an exact identity at initialization: the
        // activation scale stays depth-independent at the start of training
        // (under any gate pattern) and branches phase in as their scale
        // parameters pick up gradient. Transition blocks keep scale one —
        // their widened channels are reachable only through the branch, and
        // a zero scale would pin them at the ReLU kink with no gradient.
        // Consumes no RNG draws.
        let branch_scale = if spec.is_transition { 1.0 } else { 0.0 };
        let scaled = |mut bn: BatchNorm| {
            bn.gamma.data_mut().fill(branch_scale);
            bn
        };
        match spec.flavor {
            Flavor::Conv => Ok(ResBlock::Standard {
                spec,
                f1: CoreLayer::Conv(Conv2d::he_init(
                    spec.in_width,
                    spec.out_width,
                    spec.stride,
                    rng,
                )?),
                bn1: BatchNorm::new(spec.out_width),
                f2: CoreLayer::Conv(Conv2d::he_init(spec.out_width, spec.out_width, 1, rng)?),
                bn2: scaled(BatchNorm::new(spec.out_width)),
            }),
            Flavor::Dense => Ok(ResBlock::Standard {
                spec,
                f1: CoreLayer::Dense(Dense::he_init(spec.in_width, spec.out_width, rng)?),
                bn1: BatchNorm::new(spec.out_width),
                f2: CoreLayer::Dense(Dense::he_init(spec.out_width, spec.out_width, rng)?),
                bn2: scaled(BatchNorm::new(spec.out_width)),
            }),
            Flavor::Probe => Ok(ResBlock::Probe {
                spec,
                linear: Dense::he_init(spec.in_width, spec.out_width, rng)?,
            }),
        }
    }

    pub fn spec(&self) -> &ResBlockSpec {
        match self {
            ResBlock::Standard { spec, .. } | ResBlock::Probe { spec, .. } => spec,
        }
    }

    /// Run the full block in training mode: branch with batch statistics
    /// (updating running estimates), gate on.
    pub fn forward_train(&mut self, h: &Tensor) -> Result<(Tensor, BlockCache)> {
        match self {
            ResBlock::Standard {
                spec,
                f1,
                bn1,
                f2,
                bn2,
            } => {
                let (a1, c1) = f1.forward(h)?;
                let (n1, b1) = bn1.forward_train(&a1)?;
                let r1 = n1.max0();
                let (a2, c2) = f2.forward(&r1)?;
                let (n2, b2) = bn2.forward_train(&a2)?;
                let id = identity_path(spec, h)?;
                let y = n2.add(&id)?.max0();
                Ok((
                    y.clone(),
                    BlockCache::Standard {
                        c1,
                        b1,
                        r1,
                        c2,
                        b2,
                        y,
                        h_shape: h.shape().to_vec(),
                    },
                ))
            }
            ResBlock::Probe { linear, .. } => {
                let (branch, cache) = linear.forward(h)?;
                Ok((branch.add(h)?, BlockCache::Probe { cache }))
            }
        }
    }

    /// Run the full block without touching any state: branch with running
    /// statistics, scaled by `scale` (1 for plain eval, the survival
    /// probability for rescaled inference).
    pub fn forward_frozen(&self, h: &Tensor, scale: f64) -> Result<Tensor> {
        match self {
            ResBlock::Standard {
                spec,
                f1,
                bn1,
                f2,
                bn2,
            } => {
                let (a1, _) = f1.forward(h)?;
                let n1 = bn1.forward_eval(&a1)?;
                let r1 = n1.max0();
                let (a2, _) = f2.forward(&r1)?;
                let n2 = bn2.forward_eval(&a2)?;
                let id = identity_path(spec, h)?;
                Ok(n2.mul_scalar(scale).add(&id)?.max0())
            }
            ResBlock::Probe { linear, .. } => {
                let (branch, _) = linear.forward(h)?;
                Ok(branch.mul_scalar(scale).add(h)?)
            }
        }
    }

    /// Gate off: the branch is not evaluated at all. Plain blocks pass the
    /// input through verbatim; transitions apply only the pool-and-pad
    /// identity map.
    pub fn forward_skipped(&self, h: &Tensor) -> Result<Tensor> {
        let spec = self.spec();
        if spec.is_transition {
            identity_path(spec, h)
        } else {
            Ok(h.clone())
        }
    }

    /// Backward through an executed training-mode forward. Returns the
    /// gradient toward the input and the parameter gradients in canonical
    /// block order.
    pub fn backward(&self, cache: &BlockCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        match (self, cache) {
            (
                ResBlock::Standard {
                    spec,
                    f1,
                    bn1,
                    f2,
                    bn2,
                },
                BlockCache::Standard {
                    c1,
                    b1,
                    r1,
                    c2,
                    b2,
                    y,
                    h_shape,
                },
            ) => {
                let dpre = relu_backward(dy, y);
                let (da2, g_bn2) = bn2.backward(b2, &dpre)?;
                let (dr1, [g_f2w, g_f2b]) = f2.backward(c2, &da2)?;
                let dn1 = relu_backward(&dr1, r1);
                let (da1, g_bn1) = bn1.backward(b1, &dn1)?;
                let (dh_branch, [g_f1w, g_f1b]) = f1.backward(c1, &da1)?;
                let dh_id = if spec.is_transition {
                    identity_path_backward(spec, &dpre, h_shape)?
                } else {
                    dpre
                };
                let dh = dh_branch.add(&dh_id)?;
                Ok((
                    dh,
                    vec![
                        g_f1w, g_f1b, g_bn1.gamma, g_bn1.beta, g_f2w, g_f2b, g_bn2.gamma,
                        g_bn2.beta,
                    ],
                ))
            }
            (ResBlock::Probe { linear, .. }, BlockCache::Probe { cache }) => {
                let (dh_branch, grads) = linear.backward(cache, dy)?;
                let dh = dh_branch.add(dy)?;
                Ok((dh, vec![grads.weight, grads.bias]))
            }
            _ => Err(Error::InvalidArg("block/cache kind mismatch".into())),
        }
    }

    /// Backward through a skipped block: the pass-through (or transition
    /// identity) in reverse. No parameter gradients exist.
    pub fn backward_skipped(&self, dy: &Tensor, h_shape: &[usize]) -> Result<Tensor> {
        let spec = self.spec();
        if spec.is_transition {
            identity_path_backward(spec, dy, h_shape)
        } else {
            Ok(dy.clone())
        }
    }

    /// Zero gradients with this block's parameter shapes, canonical order.
    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.named_params()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect()
    }

    /// Trainable parameters in canonical order with local names.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        match self {
            ResBlock::Standard {
                f1, bn1, f2, bn2, ..
            } => {
                let mut out = Vec::with_capacity(8);
                let fam = f1.family();
                for (suffix, t) in f1.named_params() {
                    out.push((format!("{fam}1.{suffix}"), t));
                }
                out.push(("bn1.gamma".to_string(), &bn1.gamma));
                out.push(("bn1.beta".to_string(), &bn1.beta));
                for (suffix, t) in f2.named_params() {
                    out.push((format!("{fam}2.{suffix}"), t));
                }
                out.push(("bn2.gamma".to_string(), &bn2.gamma));
                out.push(("bn2.beta".to_string(), &bn2.beta));
                out
            }
            ResBlock::Probe { linear, .. } => vec![
                ("linear.weight".to_string(), &linear.weight),
                ("linear.bias".to_string(), &linear.bias),
            ],
        }
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match self {
            ResBlock::Standard {
                f1, bn1, f2, bn2, ..
            } => {
                let fam = f1.family();
                let mut out = Vec::with_capacity(8);
                let [p1, p2] = f1.named_params_mut();
                out.push((format!("{fam}1.{}", p1.0), p1.1));
                out.push((format!("{fam}1.{}", p2.0), p2.1));
                out.push(("bn1.gamma".to_string(), &mut bn1.gamma));
                out.push(("bn1.beta".to_string(), &mut bn1.beta));
                let [q1, q2] = f2.named_params_mut();
                out.push((format!("{fam}2.{}", q1.0), q1.1));
                out.push((format!("{fam}2.{}", q2.0), q2.1));
                out.push(("bn2.gamma".to_string(), &mut bn2.gamma));
                out.push(("bn2.beta".to_string(), &mut bn2.beta));
                out
            }
            ResBlock::Probe { linear, .. } => vec![
                ("linear.weight".to_string(), &mut linear.weight),
                ("linear.bias".to_string(), &mut linear.bias),
            ],
        }
    }

    /// Non-trainable normalization state (running mean/var), canonical order.
    pub fn named_state(&self) -> Vec<(String, &Tensor)> {
        match self {
            ResBlock::Standard { bn1, bn2, .. } => vec![
                ("bn1.running_mean".to_string(), &bn1.running_mean),
                ("bn1.running_var".to_string(), &bn1.running_var),
                ("bn2.running_mean".to_string(), &bn2.running_mean),
                ("bn2.running_var".to_string(), &bn2.running_var),
            ],
            ResBlock::Probe { .. } => vec![],
        }
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match self {
            ResBlock::Standard { bn1, bn2, .. } => vec![
                ("bn1.running_mean".to_string(), &mut bn1.running_mean),
                ("bn1.running_var".to_string(), &mut bn1.running_var),
                ("bn2.running_mean".to_string(), &mut bn2.running_mean),
                ("bn2.running_var".to_string(), &mut bn2.running_var),
            ],
            ResBlock::Probe { .. } => vec![],
        }
    }
}

/// The identity path of a transition block: 2x2 average pooling when the
/// block strides, then zero channels (conv) or zero features (dense) up to
/// the output width. Non-negative inputs stay non-negative.
pub fn identity_path(spec: &ResBlockSpec, h: &Tensor) -> Result<Tensor> {
    if !spec.is_transition {
        return Ok(h.clone());
    }
    match spec.flavor {
        Flavor::Conv => {
            let pooled = if spec.stride == 2 {
                avg_pool_2x2(h)?
            } else {
                h.clone()
            };
            pad_channels(&pooled, spec.out_width)
        }
        Flavor::Dense => pad_features(h, spec.out_width),
        Flavor::Probe => Err(Error::InvalidArg(
            "probe blocks never change shape".into(),
        )),
    }
}

/// Reverse of [`identity_path`]: drop the gradient of the zero padding, then
/// undo the pooling.
pub fn identity_path_backward(
    spec: &ResBlockSpec,
    dy: &Tensor,
    h_shape: &[usize],
) -> Result<Tensor> {
    if !spec.is_transition {
        return Ok(dy.clone());
    }
    match spec.flavor {
        Flavor::Conv => {
            let truncated = truncate_channels(dy, spec.in_width)?;
            if spec.stride == 2 {
                avg_pool_2x2_backward(&truncated, h_shape)
            } else {
                Ok(truncated)
            }
        }
        Flavor::Dense => truncate_features(dy, spec.in_width),
        Flavor::Probe => Err(Error::InvalidArg(
            "probe blocks never change shape".into(),
        )),
    }
}

fn pad_channels(x: &Tensor, out_c: usize) -> Result<Tensor> {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if out_c < c {
        return Err(Error::Shape(format!("cannot pad {c} channels down to {out_c}")));
    }
    let mut out = Tensor::zeros(vec![b, out_c, h, w]);
    let plane = h * w;
    for bi in 0..b {
        for ci in 0..c {
            let src = (bi * c + ci) * plane;
            let dst = (bi * out_c + ci) * plane;
            out.data_mut()[dst..dst + plane].copy_from_slice(&x.data()[src..src + plane]);
        }
    }
    Ok(out)
}

fn truncate_channels(dy: &Tensor, in_c: usize) -> Result<Tensor> {
    let (b, c, h, w) = (dy.shape()[0], dy.shape()[1], dy.shape()[2], dy.shape()[3]);
    if in_c > c {
        return Err(Error::Shape(format!("cannot keep {in_c} of {c} channels")));
    }
    let mut out = Tensor::zeros(vec![b, in_c, h, w]);
    let plane = h * w;
    for bi in 0..b {
        for ci in 0..in_c {
            let src = (bi * c + ci) * plane;
            let dst = (bi * in_c + ci) * plane;
            out.data_mut()[dst..dst + plane].copy_from_slice(&dy.data()[src..src + plane]);
        }
    }
    Ok(out)
}

fn pad_features(x: &Tensor, out_f: usize) -> Result<Tensor> {
    let (b, f) = (x.shape()[0], x.shape()[1]);
    if out_f < f {
        return Err(Error::Shape(format!("cannot pad {f} features down to {out_f}")));
    }
    let mut out = Tensor::zeros(vec![b, out_f]);
    for bi in 0..b {
        out.data_mut()[bi * out_f..bi * out_f + f]
            .copy_from_slice(&x.data()[bi * f..(bi + 1) * f]);
    }
    Ok(out)
}

fn truncate_features(dy: &Tensor, in_f: usize) -> Result<Tensor> {
    let (b, f) = (dy.shape()[0], dy.shape()[1]);
    if in_f > f {
        return Err(Error::Shape(format!("cannot keep {in_f} of {f} features")));
    }
    let mut out = Tensor::zeros(vec![b, in_f]);
    for bi in 0..b {
        out.data_mut()[bi * in_f..(bi + 1) * in_f]
            .copy_from_slice(&dy.data()[bi * f..bi * f + in_f]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff, max_rel_err};

    fn dense_block(in_w: usize, out_w: usize, seed: u64) -> ResBlock {
        let mut rng = RngStream::new(seed, 0);
        let spec = ResBlockSpec::new(Flavor::Dense, in_w, out_w, 1).unwrap();
        ResBlock::init(spec, &mut rng).unwrap()
    }

    fn conv_block(in_w: usize, out_w: usize, stride: usize, seed: u64) -> ResBlock {
        let mut rng = RngStream::new(seed, 0);
        let spec = ResBlockSpec::new(Flavor::Conv, in_w, out_w, stride).unwrap();
        ResBlock::init(spec, &mut rng).unwrap()
    }

    #[test]
    fn skipped_plain_block_is_bit_identical() {
        let block = dense_block(3, 3, 1);
        let h = Tensor::from_rows(&[vec![0.5, 1.0, 0.0], vec![2.0, 0.25, 7.0]]).unwrap();
        let y = block.forward_skipped(&h).unwrap();
        assert_eq!(y, h);
        for (a, b) in y.data().iter().zip(h.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn skipped_block_leaves_bn_state_alone() {
        let block = dense_block(3, 3, 2);
        let before = match &block {
            ResBlock::Standard { bn1, bn2, .. } => {
                (bn1.running_mean.clone(), bn2.running_var.clone())
            }
            _ => unreachable!(),
        };
        let h = Tensor::filled(vec![4, 3], 1.0);
        block.forward_skipped(&h).unwrap();
        match &block {
            ResBlock::Standard { bn1, bn2, .. } => {
                assert_eq!(bn1.running_mean, before.0);
                assert_eq!(bn2.running_var, before.1);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn conv_transition_identity_shapes_and_zeros() {
        let spec = ResBlockSpec::new(Flavor::Conv, 16, 32, 2).unwrap();
        let mut rng = RngStream::new(3, 0);
        let h = rng.draw_uniform01(vec![1, 16, 8, 8]);
        let id = identity_path(&spec, &h).unwrap();
        assert_eq!(id.shape(), &[1, 32, 4, 4]);
        // channels 16..31 are all zero
        for c in 16..32 {
            for s in 0..16 {
                assert_eq!(id.data()[(c * 16) + s], 0.0);
            }
        }
        // surviving channels are 2x2 averages
        let patch_avg =
            (h.data()[0] + h.data()[1] + h.data()[8] + h.data()[9]) / 4.0;
        assert!((id.data()[0] - patch_avg).abs() < 1e-15);
    }

    #[test]
    fn pooled_patch_average() {
        let spec = ResBlockSpec::new(Flavor::Conv, 1, 2, 2).unwrap();
        let h = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let id = identity_path(&spec, &h).unwrap();
        assert_eq!(id.shape(), &[1, 2, 1, 1]);
        assert_eq!(id.data()[0], 2.5);
        assert_eq!(id.data()[1], 0.0);
    }

    #[test]
    fn dense_transition_pads_with_zeros() {
        let spec = ResBlockSpec::new(Flavor::Dense, 2, 4, 1).unwrap();
        let h = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let id = identity_path(&spec, &h).unwrap();
        assert_eq!(id.data(), &[1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn skipped_transition_applies_identity_map() {
        let block = dense_block(2, 4, 5);
        let h = Tensor::from_rows(&[vec![3.0, 1.0]]).unwrap();
        let y = block.forward_skipped(&h).unwrap();
        assert_eq!(y.data(), &[3.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn executed_output_is_nonnegative() {
        for seed in 0..5 {
            let mut block = dense_block(4, 4, 100 + seed);
            let mut rng = RngStream::new(seed, 1);
            let h = rng.draw_uniform01(vec![6, 4]); // non-negative input
            let (y, _) = block.forward_train(&h).unwrap();
            assert!(y.data().iter().all(|&v| v >= 0.0));
            let y2 = block.forward_frozen(&h, 0.5).unwrap();
            assert!(y2.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn frozen_scale_one_equals_eval_forward() {
        let block = dense_block(4, 4, 9);
        let mut rng = RngStream::new(2, 1);
        let h = rng.draw_uniform01(vec![3, 4]);
        let a = block.forward_frozen(&h, 1.0).unwrap();
        let b = block.forward_frozen(&h, 1.0).unwrap();
        assert_eq!(a, b);
    }

    fn flatten_block_params(block: &ResBlock) -> Vec<f64> {
        block
            .named_params()
            .iter()
            .flat_map(|(_, t)| t.data().iter().copied())
            .collect()
    }

    fn write_block_params(block: &mut ResBlock, flat: &[f64]) {
        let mut off = 0;
        for (_, t) in block.named_params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len());
    }

    #[test]
    fn block_backward_matches_finite_differences() {
        // Dense transition block and conv strided block: the two hardest
        // identity paths.
        let blocks: Vec<(ResBlock, Vec<usize>)> = vec![
            (dense_block(3, 5, 11), vec![4, 3]),
            (dense_block(4, 4, 12), vec![4, 4]),
            (conv_block(2, 3, 2, 13), vec![2, 2, 4, 4]),
            (conv_block(2, 2, 1, 14), vec![2, 2, 4, 4]),
        ];
        for (mut block, in_shape) in blocks {
            let mut rng = RngStream::new(7, 1);
            // Shift every parameter off its initialization value so the
            // check runs at a generic point (identity-start blocks would
            // otherwise have exactly-zero branch gradients).
            for (_, t) in block.named_params_mut() {
                for v in t.data_mut() {
                    *v += rng.uniform01() * 0.8 - 0.4;
                }
            }
            let h = rng.draw_uniform01(in_shape.clone()).add_scalar(0.05);
            let (y, cache) = block.forward_train(&h).unwrap();
            let r = rng.draw_normal(1.0, y.shape().to_vec()).unwrap();
            let (dh, grads) = block.backward(&cache, &r).unwrap();

            // input gradient
            let block_ref = block.clone();
            let mut fx = |t: &[f64]| {
                let ht = Tensor::new(in_shape.clone(), t.to_vec()).unwrap();
                let mut b = block_ref.clone();
                let (y, _) = b.forward_train(&ht).unwrap();
                y.mul(&r).unwrap().sum()
            };
            let num_dh = central_diff(&mut fx, h.data(), 1e-5);
            assert!(
                max_rel_err(dh.data(), &num_dh) < 1e-5,
                "dh for {:?}",
                block.spec()
            );

            // all parameter gradients at once
            let theta = flatten_block_params(&block);
            let grad_flat: Vec<f64> = grads
                .iter()
                .flat_map(|t| t.data().iter().copied())
                .collect();
            let mut ft = |t: &[f64]| {
                let mut b = block_ref.clone();
                write_block_params(&mut b, t);
                let (y, _) = b.forward_train(&h).unwrap();
                y.mul(&r).unwrap().sum()
            };
            let num_dt = central_diff(&mut ft, &theta, 1e-5);
            assert!(
                max_rel_err(&grad_flat, &num_dt) < 1e-5,
                "params for {:?}",
                block.spec()
            );
        }
    }

    #[test]
    fn skipped_backward_is_passthrough() {
        let block = dense_block(3, 3, 21);
        let dy = Tensor::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap();
        let dh = block.backward_skipped(&dy, &[1, 3]).unwrap();
        assert_eq!(dh, dy);

        // transition: gradient of the padding is dropped, kept features pass
        let tblock = dense_block(2, 4, 22);
        let dy4 = Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let dh2 = tblock.backward_skipped(&dy4, &[1, 2]).unwrap();
        assert_eq!(dh2.data(), &[1.0, 2.0]);
    }

    #[test]
    fn probe_block_is_affine_residual() {
        // y = h + (h W + b)
        let mut rng = RngStream::new(31, 0);
        let spec = ResBlockSpec::new(Flavor::Probe, 1, 1, 1).unwrap();
        let mut block = ResBlock::init(spec, &mut rng).unwrap();
        if let ResBlock::Probe { linear, .. } = &mut block {
            linear.weight.data_mut()[0] = 2.0;
            linear.bias.data_mut()[0] = 0.0;
        }
        let h = Tensor::from_rows(&[vec![1.0]]).unwrap();
        let (y, _) = block.forward_train(&h).unwrap();
        assert_eq!(y.data(), &[3.0]); // 1 + 2*1
        let half = block.forward_frozen(&h, 0.5).unwrap();
        assert_eq!(half.data(), &[2.0]); // 1 + 0.5*2*1
    }
}
