//! 3x3 convolution with zero padding.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

const K: usize = 3;
const PAD: isize = 1;

/// 3x3 convolution, zero-padded by one pixel, stride 1 or 2.
///
/// Input `[B, C_in, H, W]`, kernel `[C_out, C_in, 3, 3]`, bias `[C_out]`.
/// Stride 1 preserves the spatial size; stride 2 halves it (rounding up).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    x: Tensor,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Spatial output size for kernel 3, pad 1, the given stride.
pub fn conv_out_size(h: usize, stride: usize) -> usize {
    (h + 2 * PAD as usize - K) / stride + 1
}

impl Conv2d {
    pub fn new(kernel: Tensor, bias: Tensor, stride: usize) -> Result<Self> {
        if kernel.rank() != 4 || kernel.shape()[2] != K || kernel.shape()[3] != K {
            return Err(Error::Shape(format!(
                "conv kernel must be [out, in, {K}, {K}], got {:?}",
                kernel.shape()
            )));
        }
        if bias.rank() != 1 || bias.shape()[0] != kernel.shape()[0] {
            return Err(Error::Shape(format!(
                "conv bias {:?} vs kernel {:?}",
                bias.shape(),
                kernel.shape()
            )));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::InvalidArg(format!("conv stride {stride} not in {{1, 2}}")));
        }
        Ok(Conv2d {
            kernel,
            bias,
            stride,
        })
    }

    /// Kaiming-normal kernel, `sigma = sqrt(2 / (C_in * 3 * 3))`, zero bias.
    pub fn he_init(
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let fan_in = in_channels * K * K;
        let sigma = (2.0 / fan_in as f64).sqrt();
        let kernel = rng.draw_normal(sigma, vec![out_channels, in_channels, K, K])?;
        let bias = Tensor::zeros(vec![out_channels]);
        Conv2d::new(kernel, bias, stride)
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize)> {
        if x.rank() != 4 || x.shape()[1] != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv forward: x {:?} vs kernel {:?}",
                x.shape(),
                self.kernel.shape()
            )));
        }
        Ok((x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvCache)> {
        let (b, cin, h, w) = self.check_input(x)?;
        let cout = self.out_channels();
        let (oh, ow) = (conv_out_size(h, self.stride), conv_out_size(w, self.stride));
        let mut out = vec![0.0; b * cout * oh * ow];
        let xd = x.data();
        let kd = self.kernel.data();
        let bd = self.bias.data();
        for bi in 0..b {
            for oc in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bd[oc];
                        for ic in 0..cin {
                            for ky in 0..K {
                                let iy = (oy * self.stride + ky) as isize - PAD;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..K {
                                    let ix = (ox * self.stride + kx) as isize - PAD;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    acc += xd[((bi * cin + ic) * h + iy as usize) * w
                                        + ix as usize]
                                        * kd[((oc * cin + ic) * K + ky) * K + kx];
                                }
                            }
                        }
                        out[((bi * cout + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        Ok((
            Tensor::new(vec![b, cout, oh, ow], out)?,
            ConvCache { x: x.clone() },
        ))
    }

    /// Adjoint of `forward`: walks the same index set and accumulates into
    /// the kernel, bias, and input gradients.
    pub fn backward(&self, cache: &ConvCache, dy: &Tensor) -> Result<(Tensor, ConvGrads)> {
        let x = &cache.x;
        let (b, cin, h, w) = self.check_input(x)?;
        let cout = self.out_channels();
        let (oh, ow) = (conv_out_size(h, self.stride), conv_out_size(w, self.stride));
        if dy.shape() != [b, cout, oh, ow] {
            return Err(Error::Shape(format!(
                "conv backward: dy {:?}, expected {:?}",
                dy.shape(),
                [b, cout, oh, ow]
            )));
        }
        let xd = x.data();
        let kd = self.kernel.data();
        let dyd = dy.data();
        let mut dx = vec![0.0; xd.len()];
        let mut dk = vec![0.0; kd.len()];
        let mut db = vec![0.0; cout];
        for bi in 0..b {
            for oc in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = dyd[((bi * cout + oc) * oh + oy) * ow + ox];
                        db[oc] += g;
                        for ic in 0..cin {
                            for ky in 0..K {
                                let iy = (oy * self.stride + ky) as isize - PAD;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..K {
                                    let ix = (ox * self.stride + kx) as isize - PAD;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = ((bi * cin + ic) * h + iy as usize) * w + ix as usize;
                                    let ki = ((oc * cin + ic) * K + ky) * K + kx;
                                    dk[ki] += xd[xi] * g;
                                    dx[xi] += kd[ki] * g;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((
            Tensor::new(vec![b, cin, h, w], dx)?,
            ConvGrads {
                kernel: Tensor::new(vec![cout, cin, K, K], dk)?,
                bias: Tensor::from_vec(db),
            },
        ))
    }
}

impl ConvGrads {
    pub fn zeros_like(layer: &Conv2d) -> Self {
        ConvGrads {
            kernel: Tensor::zeros(layer.kernel.shape().to_vec()),
            bias: Tensor::zeros(layer.bias.shape().to_vec()),
        }
    }
}
