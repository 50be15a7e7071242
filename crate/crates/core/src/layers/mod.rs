//! Neural network building blocks: dense, conv, batchnorm, pooling, loss.
//!
//! Every layer exposes an explicit `forward` returning a cache and a
//! `backward` consuming it, so the residual-block code can assemble exact
//! gradients without any implicit autograd machinery.

pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod loss;
pub mod pool;

pub use batchnorm::{BatchNorm, BnCache, BnGrads, BN_EPS, BN_MOMENTUM};
pub use conv::{conv_out_size, Conv2d, ConvCache, ConvGrads};
pub use dense::{Dense, DenseCache, DenseGrads};
pub use loss::{argmax_row, error_rate, softmax, softmax_cross_entropy};
pub use pool::{avg_pool_2x2, avg_pool_2x2_backward, global_avg_pool, global_avg_pool_backward};

use crate::tensor::Tensor;

/// Backward of `y = max(x, 0)` given the forward output: passes gradient
/// where the output is strictly positive.
pub fn relu_backward(dy: &Tensor, y: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}
