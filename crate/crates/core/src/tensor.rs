//! Dense row-major `f64` tensors.
//!
//! Everything in this crate flows through [`Tensor`]: activations, weights,
//! gradients, images. The type is deliberately minimal — shapes are explicit,
//! broadcasting is limited to scalars, and all arithmetic is plain `f64` so
//! that gradient checks and bit-exactness tests are meaningful.

use crate::error::{Error, Result};

/// Dense N-dimensional array of `f64`, row-major.
///
/// Invariant: `shape.iter().product() == data.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and flat row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} implies {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    /// 1-D tensor from a slice.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// 2-D tensor from nested rows; rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".to_string()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Consume the tensor, returning its flat data.
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterpret the flat data under a new shape of equal element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {} elements to {shape:?}",
                self.data.len()
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    fn check_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn zip_map(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_same_shape(other, op)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        self.map(|a| a + s)
    }

    pub fn mul_scalar(&self, s: f64) -> Tensor {
        self.map(|a| a * s)
    }

    /// Elementwise `max(x, 0)` — the ReLU nonlinearity.
    pub fn max0(&self) -> Tensor {
        self.map(|a| if a > 0.0 { a } else { 0.0 })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::Shape(format!(
                "matmul needs rank-2 operands, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dims disagree: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        // i-k-j loop order so both inner accesses are contiguous.
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (kk, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[kk * n..(kk + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose2(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!(
                "transpose2 needs rank 2, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data,
        })
    }

    /// Mean along `axis`; the axis is removed from the shape.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(axis, Reduction::Mean)
    }

    /// Biased (divide-by-N) variance along `axis`; the axis is removed.
    pub fn var_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(axis, Reduction::Var)
    }

    fn reduce_axis(&self, axis: usize, red: Reduction) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::InvalidArg(format!(
                "axis {axis} out of range for rank {}",
                self.rank()
            )));
        }
        let n_axis = self.shape[axis];
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out_shape = self.shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut sum = 0.0;
                for a in 0..n_axis {
                    sum += self.data[(o * n_axis + a) * inner + i];
                }
                let mean = sum / n_axis as f64;
                out[o * inner + i] = match red {
                    Reduction::Mean => mean,
                    Reduction::Var => {
                        let mut acc = 0.0;
                        for a in 0..n_axis {
                            let d = self.data[(o * n_axis + a) * inner + i] - mean;
                            acc += d * d;
                        }
                        acc / n_axis as f64
                    }
                };
            }
        }
        Tensor::new(out_shape, out)
    }

    /// Error if any element is NaN or infinite.
    pub fn validate_finite(&self, context: &str) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{context}: element {pos} is {}",
                self.data[pos]
            )));
        }
        Ok(())
    }

    /// Sum of all elements.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Mean of absolute values; 0 for empty tensors never occurs (no zero extents).
    pub fn mean_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum::<f64>() / self.data.len() as f64
    }
}

#[derive(Clone, Copy)]
enum Reduction {
    Mean,
    Var,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_pointwise() {
        let a = Tensor::from_vec(vec![1.0, 2.0]);
        let b = Tensor::from_vec(vec![3.0, 4.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn mul_by_zero_scalar() {
        let a = Tensor::from_vec(vec![1.0, 2.0]);
        assert_eq!(a.mul_scalar(0.0).data(), &[0.0, 0.0]);
    }

    #[test]
    fn max0_is_relu() {
        let a = Tensor::from_vec(vec![-1.0, 2.0]);
        assert_eq!(a.max0().data(), &[0.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Tensor::from_vec(vec![1.0, 2.0]);
        let b = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(a.add(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_identity() {
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(eye.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_dot_product() {
        let a = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_inner_dim_mismatch() {
        let a = Tensor::zeros(vec![3, 5]);
        let b = Tensor::zeros(vec![4, 2]);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn mean_axis0() {
        let t = Tensor::from_rows(&[vec![1.0, 3.0], vec![5.0, 7.0]]).unwrap();
        let m = t.mean_axis(0).unwrap();
        assert_eq!(m.shape(), &[2]);
        assert_eq!(m.data(), &[3.0, 5.0]);
    }

    #[test]
    fn var_of_constant_is_zero() {
        let t = Tensor::from_vec(vec![2.0, 2.0, 2.0]);
        assert_eq!(t.var_axis(0).unwrap().data(), &[0.0]);
    }

    #[test]
    fn var_is_biased() {
        // ((1-2)^2 + (3-2)^2) / 2 = 1
        let t = Tensor::from_vec(vec![1.0, 3.0]);
        assert_eq!(t.var_axis(0).unwrap().data(), &[1.0]);
    }

    #[test]
    fn axis_out_of_range() {
        let t = Tensor::from_vec(vec![1.0]);
        assert!(matches!(t.mean_axis(1), Err(Error::InvalidArg(_))));
    }

    #[test]
    fn validate_finite_catches_nan() {
        let mut t = Tensor::zeros(vec![3]);
        t.data_mut()[1] = f64::NAN;
        assert!(matches!(
            t.validate_finite("test"),
            Err(Error::NonFinite(_))
        ));
    }

    // Independent oracle: textbook i-j-k triple loop, separate from the
    // i-k-j implementation in `matmul`.
    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a.data()[i * k + kk] * b.data()[kk * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        Tensor::new(vec![m, n], out).unwrap()
    }

    #[test]
    fn matmul_matches_naive_triple_loop() {
        use crate::rng::RngStream;
        let mut rng = RngStream::new(7, 0);
        for &(m, k, n) in &[(3, 5, 2), (1, 1, 1), (8, 8, 8), (32, 32, 32), (17, 9, 23)] {
            let a = rng.draw_uniform01(vec![m, k]).add_scalar(-0.5);
            let b = rng.draw_uniform01(vec![k, n]).add_scalar(-0.5);
            let got = a.matmul(&b).unwrap();
            let want = naive_matmul(&a, &b);
            for (g, w) in got.data().iter().zip(want.data()) {
                let denom = g.abs().max(w.abs()).max(1.0);
                assert!(
                    (g - w).abs() / denom < 1e-12,
                    "matmul {m}x{k}x{n}: {g} vs {w}"
                );
            }
        }
    }

    #[test]
    fn transpose_roundtrip() {
        let t = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(t.transpose2().unwrap().transpose2().unwrap(), t);
    }
}
