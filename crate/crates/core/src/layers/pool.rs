//! Average pooling (parameter-free).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2x2 average pooling with stride 2. Spatial dims must be even.
pub fn avg_pool_2x2(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::Shape(format!(
            "avg_pool_2x2 expects rank 4, got {:?}",
            x.shape()
        )));
    }
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "avg_pool_2x2 needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = vec![0.0; b * c * oh * ow];
    for bi in 0..b {
        for ci in 0..c {
            let plane = (bi * c + ci) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let (iy, ix) = (oy * 2, ox * 2);
                    let sum = xd[plane + iy * w + ix]
                        + xd[plane + iy * w + ix + 1]
                        + xd[plane + (iy + 1) * w + ix]
                        + xd[plane + (iy + 1) * w + ix + 1];
                    out[((bi * c + ci) * oh + oy) * ow + ox] = sum * 0.25;
                }
            }
        }
    }
    Tensor::new(vec![b, c, oh, ow], out)
}

/// Backward of [`avg_pool_2x2`]: spreads each output gradient evenly over
/// its 2x2 window.
pub fn avg_pool_2x2_backward(dy: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let (b, c, h, w) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    let (oh, ow) = (h / 2, w / 2);
    if dy.shape() != [b, c, oh, ow] {
        return Err(Error::Shape(format!(
            "avg_pool_2x2 backward: dy {:?} for input {input_shape:?}",
            dy.shape()
        )));
    }
    let dyd = dy.data();
    let mut dx = vec![0.0; b * c * h * w];
    for bi in 0..b {
        for ci in 0..c {
            let plane = (bi * c + ci) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = dyd[((bi * c + ci) * oh + oy) * ow + ox] * 0.25;
                    let (iy, ix) = (oy * 2, ox * 2);
                    dx[plane + iy * w + ix] += g;
                    dx[plane + iy * w + ix + 1] += g;
                    dx[plane + (iy + 1) * w + ix] += g;
                    dx[plane + (iy + 1) * w + ix + 1] += g;
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx)
}

/// Mean over all spatial positions: `[B, C, H, W] -> [B, C]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::Shape(format!(
            "global_avg_pool expects rank 4, got {:?}",
            x.shape()
        )));
    }
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let hw = h * w;
    let xd = x.data();
    let mut out = vec![0.0; b * c];
    for bi in 0..b {
        for ci in 0..c {
            let plane = (bi * c + ci) * hw;
            let mut sum = 0.0;
            for s in 0..hw {
                sum += xd[plane + s];
            }
            out[bi * c + ci] = sum / hw as f64;
        }
    }
    Tensor::new(vec![b, c], out)
}

/// Backward of [`global_avg_pool`].
pub fn global_avg_pool_backward(dy: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let (b, c, h, w) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    if dy.shape() != [b, c] {
        return Err(Error::Shape(format!(
            "global_avg_pool backward: dy {:?} for input {input_shape:?}",
            dy.shape()
        )));
    }
    let hw = (h * w) as f64;
    let dyd = dy.data();
    let mut dx = vec![0.0; b * c * h * w];
    for bi in 0..b {
        for ci in 0..c {
            let g = dyd[bi * c + ci] / hw;
            let plane = (bi * c + ci) * h * w;
            for s in 0..h * w {
                dx[plane + s] = g;
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx)
}
