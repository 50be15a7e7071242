//! Softmax cross-entropy loss and classification error.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of rank-2 logits, shifted by the row max for stability.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.rank() != 2 {
        return Err(Error::Shape(format!(
            "softmax expects rank 2, got {:?}",
            logits.shape()
        )));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    let z = logits.data();
    let mut out = vec![0.0; b * c];
    for i in 0..b {
        let row = &z[i * c..(i + 1) * c];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..c {
            let e = (row[j] - m).exp();
            out[i * c + j] = e;
            denom += e;
        }
        for j in 0..c {
            out[i * c + j] /= denom;
        }
    }
    Tensor::new(vec![b, c], out)
}

/// Mean cross-entropy over the batch, plus its gradient with respect to the
/// logits: `(softmax - onehot) / B`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for batch of {b}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArg(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let z = logits.data();
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = &z[i * c..(i + 1) * c];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_denom = row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        loss += log_denom - (row[label] - m);
    }
    loss /= b as f64;

    let mut dlogits = softmax(logits)?;
    let d = dlogits.data_mut();
    for (i, &label) in labels.iter().enumerate() {
        d[i * c + label] -= 1.0;
    }
    for v in d.iter_mut() {
        *v /= b as f64;
    }
    Ok((loss, dlogits))
}

/// Index of the row maximum; ties go to the lowest index, so the result is
/// deterministic.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of rows whose argmax disagrees with the label.
pub fn error_rate(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for batch of {b}",
            labels.len()
        )));
    }
    let z = logits.data();
    let wrong = labels
        .iter()
        .enumerate()
        .filter(|&(i, &label)| argmax_row(&z[i * c..(i + 1) * c]) != label)
        .count();
    Ok(wrong as f64 / b as f64)
}
