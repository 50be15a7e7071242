//! Fully connected layer.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Affine map `y = x W + b` for row-major batches `x: [B, in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    /// `[in_features, out_features]`
    pub weight: Tensor,
    /// `[out_features]`
    pub bias: Tensor,
}

/// Saved forward inputs needed by the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Tensor,
}

/// Parameter gradients, same shapes as the layer's parameters.
#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != weight.shape()[1] {
            return Err(Error::Shape(format!(
                "dense: weight {:?} / bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Dense { weight, bias })
    }

    /// Kaiming-normal weights, `sigma = sqrt(2 / fan_in)`, zero bias.
    pub fn he_init(in_features: usize, out_features: usize, rng: &mut RngStream) -> Result<Self> {
        let sigma = (2.0 / in_features as f64).sqrt();
        let weight = rng.draw_normal(sigma, vec![in_features, out_features])?;
        let bias = Tensor::zeros(vec![out_features]);
        Ok(Dense { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        if x.rank() != 2 || x.shape()[1] != self.in_features() {
            return Err(Error::Shape(format!(
                "dense forward: x {:?} vs weight {:?}",
                x.shape(),
                self.weight.shape()
            )));
        }
        let mut y = x.matmul(&self.weight)?;
        let (b, out) = (y.shape()[0], y.shape()[1]);
        let bias = self.bias.data();
        let ydat = y.data_mut();
        for i in 0..b {
            for j in 0..out {
                ydat[i * out + j] += bias[j];
            }
        }
        Ok((y, DenseCache { x: x.clone() }))
    }

    /// Given `d phi / d y`, return (`d phi / d x`, parameter gradients).
    pub fn backward(&self, cache: &DenseCache, dy: &Tensor) -> Result<(Tensor, DenseGrads)> {
        let dx = dy.matmul(&self.weight.transpose2()?)?;
        let dw = cache.x.transpose2()?.matmul(dy)?;
        let (b, out) = (dy.shape()[0], dy.shape()[1]);
        let mut db = vec![0.0; out];
        for i in 0..b {
            for j in 0..out {
                db[j] += dy.data()[i * out + j];
            }
        }
        Ok((
            dx,
            DenseGrads {
                weight: dw,
                bias: Tensor::from_vec(db),
            },
        ))
    }
}

impl DenseGrads {
    pub fn zeros_like(layer: &Dense) -> Self {
        DenseGrads {
            weight: Tensor::zeros(layer.weight.shape().to_vec()),
            bias: Tensor::zeros(layer.bias.shape().to_vec()),
        }
    }
}
