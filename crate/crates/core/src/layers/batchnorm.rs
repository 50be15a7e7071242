//! Batch normalization over the channel axis.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch normalization for `[B, C]` or `[B, C, H, W]` inputs.
///
/// Training mode normalizes with biased batch statistics per channel and
/// folds them into running estimates (`r <- (1 - momentum) * r + momentum *
/// batch`); eval mode normalizes with the running estimates and touches
/// nothing.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BnGrads {
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// `(batch, channels, spatial)` decomposition: element `(b, c, s)` lives at
/// flat index `(b * C + c) * S + s`. Rank-2 inputs have `S = 1`.
fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape.len() {
        2 => Ok((shape[0], shape[1], 1)),
        4 => Ok((shape[0], shape[1], shape[2] * shape[3])),
        _ => Err(Error::Shape(format!(
            "batchnorm expects rank 2 or 4, got {shape:?}"
        ))),
    }
}

impl BatchNorm {
    /// Fresh layer: unit scale, zero shift, zero running mean, unit running
    /// variance.
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::filled(vec![channels], 1.0),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::filled(vec![channels], 1.0),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.shape()[0]
    }

    fn check_channels(&self, shape: &[usize]) -> Result<(usize, usize, usize)> {
        let (b, c, s) = layout(shape)?;
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batchnorm: input {shape:?} vs {} channels",
                self.channels()
            )));
        }
        Ok((b, c, s))
    }

    /// Normalize with batch statistics and update the running estimates.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BnCache)> {
        let (b, c, s) = self.check_channels(x.shape())?;
        if b < 2 {
            return Err(Error::InvalidArg(format!(
                "batchnorm training needs batch >= 2, got {b}"
            )));
        }
        let n = (b * s) as f64;
        let xd = x.data();
        let mut mean = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * s;
                for si in 0..s {
                    mean[ci] += xd[base + si];
                }
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * s;
                for si in 0..s {
                    let d = xd[base + si] - mean[ci];
                    var[ci] += d * d;
                }
            }
        }
        for v in &mut var {
            *v /= n;
        }

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = vec![0.0; xd.len()];
        let mut y = vec![0.0; xd.len()];
        let g = self.gamma.data();
        let be = self.beta.data();
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * s;
                for si in 0..s {
                    let xh = (xd[base + si] - mean[ci]) * inv_std[ci];
                    xhat[base + si] = xh;
                    y[base + si] = g[ci] * xh + be[ci];
                }
            }
        }

        let m = self.momentum;
        for ci in 0..c {
            let rm = self.running_mean.data_mut();
            rm[ci] = (1.0 - m) * rm[ci] + m * mean[ci];
            let rv = self.running_var.data_mut();
            rv[ci] = (1.0 - m) * rv[ci] + m * var[ci];
        }

        Ok((
            Tensor::new(x.shape().to_vec(), y)?,
            BnCache {
                xhat: Tensor::new(x.shape().to_vec(), xhat)?,
                inv_std,
            },
        ))
    }

    /// Normalize with the running estimates; no state is modified.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, s) = self.check_channels(x.shape())?;
        let xd = x.data();
        let g = self.gamma.data();
        let be = self.beta.data();
        let rm = self.running_mean.data();
        let rv = self.running_var.data();
        let inv_std: Vec<f64> = rv.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut y = vec![0.0; xd.len()];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * s;
                for si in 0..s {
                    y[base + si] = g[ci] * (xd[base + si] - rm[ci]) * inv_std[ci] + be[ci];
                }
            }
        }
        Tensor::new(x.shape().to_vec(), y)
    }

    /// Backward through the training-mode forward.
    pub fn backward(&self, cache: &BnCache, dy: &Tensor) -> Result<(Tensor, BnGrads)> {
        let (b, c, s) = self.check_channels(dy.shape())?;
        let n = (b * s) as f64;
        let dyd = dy.data();
        let xh = cache.xhat.data();
        let g = self.gamma.data();

        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * s;
                for si in 0..s {
                    dgamma[ci] += dyd[base + si] * xh[base + si];
                    dbeta[ci] += dyd[base + si];
                }
            }
        }

        // dx = gamma * inv_std / N * (N * dy - sum(dy) - xhat * sum(dy * xhat))
        let mut dx = vec![0.0; dyd.len()];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * s;
                let k = g[ci] * cache.inv_std[ci] / n;
                for si in 0..s {
                    dx[base + si] = k
                        * (n * dyd[base + si] - dbeta[ci] - xh[base + si] * dgamma[ci]);
                }
            }
        }

        Ok((
            Tensor::new(dy.shape().to_vec(), dx)?,
            BnGrads {
                gamma: Tensor::from_vec(dgamma),
                beta: Tensor::from_vec(dbeta),
            },
        ))
    }
}

impl BnGrads {
    pub fn zeros_like(layer: &BatchNorm) -> Self {
        BnGrads {
            gamma: Tensor::zeros(layer.gamma.shape().to_vec()),
            beta: Tensor::zeros(layer.beta.shape().to_vec()),
        }
    }
}
