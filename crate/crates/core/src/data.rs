//! Datasets, splits, standardization, and augmentation.
//!
//! A [`Dataset`] holds every sample in one tensor (`N×F` feature rows or
//! `N×C×H×W` images) plus per-sample labels and split tags. Construction
//! is deterministic under fixed RNG streams, standardization statistics
//! come from the train split only, and augmentation consumes random draws
//! only for the features that are actually enabled, so disabling it is a
//! bit-exact no-op.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Channels whose train-split standard deviation falls at or below this
/// bound divide by 1 instead, so constant channels map to zeros rather
/// than NaN.
pub const STD_EPS: f64 = 1e-12;

/// How many full turns each spiral arm makes in [`make_spirals`].
const SPIRAL_TURNS: f64 = 1.75;

/// Which portion of the experiment a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Immutable sample store: inputs, labels, and split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    splits: Vec<Split>,
    num_classes: usize,
}

impl Dataset {
    /// Wraps raw inputs and labels; every sample starts in the train split.
    ///
    /// Inputs must be rank 2 (`N×F`) or rank 4 (`N×C×H×W`) with leading
    /// extent equal to `labels.len()`, and every label must lie in
    /// `0..num_classes`.
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rank() != 2 && inputs.rank() != 4 {
            return Err(Error::Shape(format!(
                "dataset inputs must be rank 2 or 4, got {:?}",
                inputs.shape()
            )));
        }
        if inputs.shape()[0] != labels.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} labels",
                inputs.shape()[0],
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArg(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        if let Some((i, &l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= num_classes)
        {
            return Err(Error::Data(format!(
                "label {l} at sample {i} out of range (num_classes {num_classes})"
            )));
        }
        let n = labels.len();
        Ok(Dataset {
            inputs,
            labels,
            splits: vec![Split::Train; n],
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Shape of a single sample (input shape without the leading N).
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// Reassigns one sample's split tag.
    pub fn set_split(&mut self, index: usize, split: Split) -> Result<()> {
        if index >= self.len() {
            return Err(Error::InvalidArg(format!(
                "sample index {index} out of range (N={})",
                self.len()
            )));
        }
        self.splits[index] = split;
        Ok(())
    }

    /// Indices of all samples tagged with `split`, in storage order.
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    /// Copies the given samples into a new `(inputs, labels)` pair,
    /// preserving order. Used for minibatch assembly and split views.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::Data("cannot gather an empty sample set".to_string()));
        }
        let row: usize = self.sample_shape().iter().product();
        let mut data = Vec::with_capacity(indices.len() * row);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArg(format!(
                    "sample index {i} out of range (N={})",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.inputs.data()[i * row..(i + 1) * row]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        Ok((Tensor::new(shape, data)?, labels))
    }

    /// All samples of one split as a standalone `(inputs, labels)` pair.
    pub fn split_data(&self, split: Split) -> Result<(Tensor, Vec<usize>)> {
        let idx = self.indices_of(split);
        if idx.is_empty() {
            return Err(Error::Data(format!("split {split:?} is empty")));
        }
        self.gather(&idx)
    }
}

/// Generates `classes` interleaved 2-D spiral arms with `n_per_class`
/// points each and additive Gaussian noise of scale `noise_sigma`.
///
/// Point `i` of class `c` sits at radius `(i+1)/n_per_class` and angle
/// `2π·turns·r + 2π·c/classes`, so arms wind outward together and
/// interleave in angle. With `noise_sigma = 0` no random draws are
/// consumed and the arms are disjoint curves. All samples start tagged
/// as train data.
pub fn make_spirals(
    n_per_class: usize,
    classes: usize,
    noise_sigma: f64,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidArg(format!(
            "spirals need at least 2 classes, got {classes}"
        )));
    }
    if n_per_class == 0 {
        return Err(Error::InvalidArg(
            "n_per_class must be positive".to_string(),
        ));
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(Error::InvalidArg(format!(
            "noise_sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    let tau = std::f64::consts::TAU;
    let n = n_per_class * classes;
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        let phase = tau * c as f64 / classes as f64;
        for i in 0..n_per_class {
            let r = (i + 1) as f64 / n_per_class as f64;
            let theta = tau * SPIRAL_TURNS * r + phase;
            let mut x = r * theta.cos();
            let mut y = r * theta.sin();
            if noise_sigma > 0.0 {
                x += rng.normal(noise_sigma)?;
                y += rng.normal(noise_sigma)?;
            }
            data.push(x);
            data.push(y);
            labels.push(c);
        }
    }
    Dataset::new(Tensor::new(vec![n, 2], data)?, labels, classes)
}

/// Loads an image dataset from a headerless CSV file.
///
/// Each row is a label followed by exactly `channels·height·width` pixel
/// values in `[0, 255]`; pixels are scaled to `[0, 1]`. Every malformed
/// row is reported with its 1-based row number. All samples start tagged
/// as train data.
pub fn load_image_csv(
    path: &Path,
    channels: usize,
    height: usize,
    width: usize,
    num_classes: usize,
) -> Result<Dataset> {
    let pixels = channels * height * width;
    if pixels == 0 {
        return Err(Error::InvalidArg(
            "image shape extents must be positive".to_string(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        if record.len() != 1 + pixels {
            return Err(Error::Data(format!(
                "row {row}: expected {} fields (label + {pixels} pixels), found {}",
                1 + pixels,
                record.len()
            )));
        }
        let label: usize = record[0]
            .parse()
            .map_err(|_| Error::Data(format!("row {row}: invalid label `{}`", &record[0])))?;
        if label >= num_classes {
            return Err(Error::Data(format!(
                "row {row}: label {label} out of range (num_classes {num_classes})"
            )));
        }
        labels.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Data(format!("row {row}: invalid pixel `{field}`")))?;
            if !(0.0..=255.0).contains(&v) {
                return Err(Error::Data(format!(
                    "row {row}: pixel {v} outside [0, 255]"
                )));
            }
            data.push(v / 255.0);
        }
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let n = labels.len();
    Dataset::new(
        Tensor::new(vec![n, channels, height, width], data)?,
        labels,
        num_classes,
    )
}

/// Standardizes every split with per-channel statistics computed on the
/// train split only; returns the transformed dataset plus the mean and
/// the (epsilon-guarded) divisor actually applied per channel.
///
/// Channels are features for `N×F` inputs and image channels (statistics
/// pooled over all pixels) for `N×C×H×W` inputs. The standard deviation
/// is the population estimate; channels with train std ≤ [`STD_EPS`]
/// divide by 1, so constant channels come out as zeros.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, Tensor, Tensor)> {
    let train_idx = ds.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Data(
            "standardize: train split is empty".to_string(),
        ));
    }
    let shape = ds.inputs().shape().to_vec();
    let channels = shape[1];
    // Contiguous values per channel entry within one sample.
    let inner: usize = shape[2..].iter().product::<usize>().max(1);
    let row = channels * inner;

    let mut mean = vec![0.0f64; channels];
    let mut count = 0usize;
    for &i in &train_idx {
        let sample = &ds.inputs().data()[i * row..(i + 1) * row];
        for c in 0..channels {
            for s in 0..inner {
                mean[c] += sample[c * inner + s];
            }
        }
        count += inner;
    }
    for m in &mut mean {
        *m /= count as f64;
    }

    let mut var = vec![0.0f64; channels];
    for &i in &train_idx {
        let sample = &ds.inputs().data()[i * row..(i + 1) * row];
        for c in 0..channels {
            for s in 0..inner {
                let d = sample[c * inner + s] - mean[c];
                var[c] += d * d;
            }
        }
    }
    let divisor: Vec<f64> = var
        .iter()
        .map(|&v| {
            let std = (v / count as f64).sqrt();
            if std > STD_EPS {
                std
            } else {
                1.0
            }
        })
        .collect();

    let mut out = ds.clone();
    let n = ds.len();
    let data = out.inputs.data_mut();
    for i in 0..n {
        let sample = &mut data[i * row..(i + 1) * row];
        for c in 0..channels {
            for s in 0..inner {
                sample[c * inner + s] = (sample[c * inner + s] - mean[c]) / divisor[c];
            }
        }
    }
    Ok((
        out,
        Tensor::new(vec![channels], mean)?,
        Tensor::new(vec![channels], divisor)?,
    ))
}

/// Augmentation switches. Disabling both features makes
/// [`augment_minibatch`] a bit-exact no-op that consumes no draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Mirror each image left-right with probability 1/2.
    pub hflip: bool,
    /// Zero-pad this many pixels on every side, then crop back to the
    /// original size at a uniformly random offset.
    pub translate_pixels: usize,
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig::default()
    }

    pub fn is_enabled(&self) -> bool {
        self.hflip || self.translate_pixels > 0
    }
}

/// Applies per-image augmentation to a `B×C×H×W` batch.
///
/// Draw order per image: one Bernoulli draw if `hflip` is set (flip
/// applies before translation), then row and column crop offsets if
/// `translate_pixels > 0`. Disabled features consume no draws.
pub fn augment_minibatch(
    batch: &Tensor,
    cfg: &AugmentConfig,
    rng: &mut RngStream,
) -> Result<Tensor> {
    if batch.rank() != 4 {
        return Err(Error::Shape(format!(
            "augmentation expects B×C×H×W images, got {:?}",
            batch.shape()
        )));
    }
    let (b, c, h, w) = (
        batch.shape()[0],
        batch.shape()[1],
        batch.shape()[2],
        batch.shape()[3],
    );
    let t = cfg.translate_pixels;
    if t >= h.min(w) {
        return Err(Error::InvalidArg(format!(
            "translate_pixels {t} must be smaller than min(H, W) = {}",
            h.min(w)
        )));
    }
    if !cfg.is_enabled() {
        return Ok(batch.clone());
    }

    let mut out = Tensor::zeros(batch.shape().to_vec());
    let src = batch.data();
    let dst = out.data_mut();
    for bi in 0..b {
        let flip = cfg.hflip && rng.bernoulli(0.5)? == 1.0;
        let (oy, ox) = if t > 0 {
            (rng.index(2 * t + 1), rng.index(2 * t + 1))
        } else {
            (0, 0)
        };
        for ci in 0..c {
            let plane = ((bi * c) + ci) * h * w;
            for y in 0..h {
                // Source row in the (possibly flipped) image: output row y
                // reads padded row y+oy, which is original row y+oy-t.
                let sy = y + oy;
                if sy < t || sy >= t + h {
                    continue; // stays zero (padding)
                }
                let sy = sy - t;
                for x in 0..w {
                    let sx = x + ox;
                    if sx < t || sx >= t + w {
                        continue;
                    }
                    let mut sx = sx - t;
                    if flip {
                        sx = w - 1 - sx;
                    }
                    dst[plane + y * w + x] = src[plane + sy * w + sx];
                }
            }
        }
    }
    Ok(out)
}

/// Moves a fraction of the train-tagged samples into `target`, chosen by
/// a deterministic shuffle of the train indices. The moved count is
/// `round(train_len · fraction)`; producing an empty split on either
/// side is an error.
pub fn split_off(
    ds: &Dataset,
    fraction: f64,
    target: Split,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if target == Split::Train {
        return Err(Error::InvalidArg(
            "split_off target must be val or test".to_string(),
        ));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArg(format!(
            "fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    let mut train_idx = ds.indices_of(Split::Train);
    let n = train_idx.len();
    if n == 0 {
        return Err(Error::Data("split_off: train split is empty".to_string()));
    }
    let k = (n as f64 * fraction).round() as usize;
    if k == 0 || k == n {
        return Err(Error::Data(format!(
            "split_off: fraction {fraction} of {n} train samples would leave an empty split"
        )));
    }
    rng.shuffle(&mut train_idx);
    let mut out = ds.clone();
    for &i in train_idx.iter().take(k) {
        out.splits[i] = target;
    }
    Ok(out)
}

/// Holds out a validation split: moves `round(train_len · val_fraction)`
/// train samples to the val split via a deterministic shuffle.
pub fn holdout_split(ds: &Dataset, val_fraction: f64, rng: &mut RngStream) -> Result<Dataset> {
    split_off(ds, val_fraction, Split::Val, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, RngStream};
    use std::io::Write;

    fn data_rng() -> RngStream {
        RngStream::new(42, stream::DATA)
    }

    #[test]
    fn spirals_shape_and_balance() {
        let mut rng = data_rng();
        let ds = make_spirals(100, 3, 0.05, &mut rng).unwrap();
        assert_eq!(ds.len(), 300);
        assert_eq!(ds.inputs().shape(), &[300, 2]);
        assert_eq!(ds.num_classes(), 3);
        for c in 0..3 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == c).count(), 100);
        }
        assert!(ds.splits().iter().all(|&s| s == Split::Train));
    }

    #[test]
    fn spirals_deterministic_under_fixed_seed() {
        let a = make_spirals(50, 2, 0.1, &mut data_rng()).unwrap();
        let b = make_spirals(50, 2, 0.1, &mut data_rng()).unwrap();
        assert_eq!(a.inputs().data(), b.inputs().data());
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn noiseless_spirals_are_nearest_neighbor_separable() {
        let mut rng = data_rng();
        let ds = make_spirals(80, 2, 0.0, &mut rng).unwrap();
        let x = ds.inputs().data();
        let n = ds.len();
        // Leave-one-out 1-NN must classify every point correctly.
        for i in 0..n {
            let (mut best, mut best_d) = (usize::MAX, f64::INFINITY);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dx = x[2 * i] - x[2 * j];
                let dy = x[2 * i + 1] - x[2 * j + 1];
                let d = dx * dx + dy * dy;
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assert_eq!(
                ds.labels()[i],
                ds.labels()[best],
                "point {i} misclassified by 1-NN"
            );
        }
    }

    #[test]
    fn noiseless_spirals_consume_no_draws() {
        let mut rng = data_rng();
        let before = rng.capture();
        let _ = make_spirals(30, 2, 0.0, &mut rng).unwrap();
        assert_eq!(rng.capture(), before);
    }

    #[test]
    fn spirals_reject_bad_args() {
        assert!(make_spirals(10, 1, 0.0, &mut data_rng()).is_err());
        assert!(make_spirals(0, 2, 0.0, &mut data_rng()).is_err());
        assert!(make_spirals(10, 2, -0.1, &mut data_rng()).is_err());
        assert!(make_spirals(10, 2, f64::NAN, &mut data_rng()).is_err());
    }

    fn write_csv(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn csv_loads_and_scales() {
        let (_d, path) = write_csv("1,0,128,64,255\n");
        let ds = load_image_csv(&path, 1, 2, 2, 2).unwrap();
        assert_eq!(ds.inputs().shape(), &[1, 1, 2, 2]);
        assert_eq!(ds.labels(), &[1]);
        let px = ds.inputs().data();
        assert_eq!(px[0], 0.0);
        assert_eq!(px[1], 128.0 / 255.0);
        assert_eq!(px[2], 64.0 / 255.0);
        assert_eq!(px[3], 1.0);
    }

    #[test]
    fn csv_wrong_field_count_names_row() {
        let (_d, path) = write_csv("0,1,2,3\n");
        let err = load_image_csv(&path, 1, 2, 2, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1"), "message was: {msg}");
    }

    #[test]
    fn csv_bad_label_names_row() {
        let (_d, path) = write_csv("0,1,2,3,4\n7,1,2,3,4\n");
        let err = load_image_csv(&path, 1, 2, 2, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("label 7"), "{msg}");
    }

    #[test]
    fn csv_bad_pixel_names_row() {
        let (_d, path) = write_csv("0,1,2,3,999\n");
        let err = load_image_csv(&path, 1, 2, 2, 2).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");

        let (_d2, path2) = write_csv("0,1,2,3,4\n0,1,abc,3,4\n");
        let err2 = load_image_csv(&path2, 1, 2, 2, 2).unwrap_err();
        let msg2 = err2.to_string();
        assert!(msg2.contains("row 2") && msg2.contains("abc"), "{msg2}");
    }

    #[test]
    fn csv_empty_file_is_an_error() {
        let (_d, path) = write_csv("");
        assert!(load_image_csv(&path, 1, 2, 2, 2).is_err());
    }

    #[test]
    fn standardize_centers_train_split() {
        let mut rng = data_rng();
        let ds = make_spirals(60, 2, 0.2, &mut rng).unwrap();
        let ds = holdout_split(&ds, 0.25, &mut rng).unwrap();
        let (std_ds, _, _) = standardize(&ds).unwrap();

        let (train_x, _) = std_ds.split_data(Split::Train).unwrap();
        let n = train_x.shape()[0] as f64;
        for c in 0..2 {
            let vals: Vec<f64> = train_x
                .data()
                .iter()
                .skip(c)
                .step_by(2)
                .copied()
                .collect();
            let mean: f64 = vals.iter().sum::<f64>() / n;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-10, "channel {c} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-10, "channel {c} std {}", var.sqrt());
        }
    }

    #[test]
    fn standardize_constant_channel_becomes_zeros() {
        let inputs = Tensor::new(vec![4, 2], vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0]).unwrap();
        let ds = Dataset::new(inputs, vec![0, 1, 0, 1], 2).unwrap();
        let (out, mean, divisor) = standardize(&ds).unwrap();
        for i in 0..4 {
            assert_eq!(out.inputs().data()[2 * i], 0.0);
        }
        assert_eq!(mean.data()[0], 5.0);
        assert_eq!(divisor.data()[0], 1.0);
    }

    #[test]
    fn standardize_uses_train_stats_not_val_stats() {
        // Train channel: {0, 2} → mean 1, std 1. Val sample: 5 → (5-1)/1 = 4.
        let inputs = Tensor::new(vec![3, 1], vec![0.0, 2.0, 5.0]).unwrap();
        let mut ds = Dataset::new(inputs, vec![0, 1, 0], 2).unwrap();
        ds.set_split(2, Split::Val).unwrap();
        let (out, mean, divisor) = standardize(&ds).unwrap();
        assert_eq!(mean.data()[0], 1.0);
        assert_eq!(divisor.data()[0], 1.0);
        assert_eq!(out.inputs().data(), &[-1.0, 1.0, 4.0]);
        // A val-fit transform would give mean 0; 4 ≠ 0 proves train stats.
        let (val_x, _) = out.split_data(Split::Val).unwrap();
        assert!(val_x.data()[0].abs() > 1e-6);
    }

    #[test]
    fn standardize_requires_train_samples() {
        let inputs = Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let mut ds = Dataset::new(inputs, vec![0, 1], 2).unwrap();
        ds.set_split(0, Split::Val).unwrap();
        ds.set_split(1, Split::Val).unwrap();
        assert!(standardize(&ds).is_err());
    }

    #[test]
    fn standardize_image_channels_pool_over_pixels() {
        // One 2-channel 1×2 image, channel stats pool over both pixels.
        let inputs = Tensor::new(vec![2, 2, 1, 2], vec![
            0.0, 2.0, 10.0, 10.0, // sample 0: ch0 = {0,2}, ch1 = {10,10}
            4.0, 6.0, 10.0, 10.0, // sample 1: ch0 = {4,6}, ch1 = {10,10}
        ])
        .unwrap();
        let ds = Dataset::new(inputs, vec![0, 1], 2).unwrap();
        let (out, mean, divisor) = standardize(&ds).unwrap();
        assert_eq!(mean.data()[0], 3.0); // (0+2+4+6)/4
        assert_eq!(mean.data()[1], 10.0);
        assert_eq!(divisor.data()[1], 1.0); // constant channel guard
        let d = out.inputs().data();
        // ch0 std = sqrt(((−3)²+(−1)²+1²+3²)/4) = sqrt(5)
        let s = 5.0f64.sqrt();
        assert!((d[0] - (-3.0 / s)).abs() < 1e-12);
        assert_eq!(d[2], 0.0);
        assert_eq!(d[3], 0.0);
    }

    #[test]
    fn augment_disabled_is_bit_exact_noop() {
        let batch = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut rng = RngStream::new(7, stream::AUGMENT);
        let before = rng.capture();
        let out = augment_minibatch(&batch, &AugmentConfig::disabled(), &mut rng).unwrap();
        assert_eq!(out, batch);
        assert_eq!(rng.capture(), before, "disabled augmentation must not draw");
    }

    #[test]
    fn hflip_mirrors_columns() {
        let batch = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let cfg = AugmentConfig {
            hflip: true,
            translate_pixels: 0,
        };
        let mut rng = RngStream::new(3, stream::AUGMENT);
        let mirrored = vec![2.0, 1.0, 4.0, 3.0];
        let mut saw_flip = false;
        let mut saw_same = false;
        for _ in 0..200 {
            let out = augment_minibatch(&batch, &cfg, &mut rng).unwrap();
            if out.data() == mirrored.as_slice() {
                saw_flip = true;
            } else if out.data() == batch.data() {
                saw_same = true;
            } else {
                panic!("hflip produced neither identity nor mirror: {:?}", out.data());
            }
        }
        assert!(saw_flip && saw_same);
    }

    #[test]
    fn translate_matches_enumerated_crops() {
        // 2×2 image with one hot pixel at (0, 0); translate_pixels = 1.
        // Enumerate all 9 crop offsets of the 4×4 padded image directly.
        let batch = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let mut expected = Vec::new();
        for oy in 0..3usize {
            for ox in 0..3usize {
                let mut img = vec![0.0; 4];
                for y in 0..2usize {
                    for x in 0..2usize {
                        let (sy, sx) = (y + oy, x + ox);
                        // Padded image: hot pixel sits at (1, 1).
                        if sy == 1 && sx == 1 {
                            img[y * 2 + x] = 1.0;
                        }
                    }
                }
                if !expected.contains(&img) {
                    expected.push(img);
                }
            }
        }
        // 4 in-frame positions + 5 offsets that push the pixel out (all-zero).
        assert_eq!(expected.len(), 5);

        let cfg = AugmentConfig {
            hflip: false,
            translate_pixels: 1,
        };
        let mut rng = RngStream::new(11, stream::AUGMENT);
        let mut seen = vec![false; expected.len()];
        for _ in 0..500 {
            let out = augment_minibatch(&batch, &cfg, &mut rng).unwrap();
            let pos = expected
                .iter()
                .position(|e| e.as_slice() == out.data())
                .expect("crop outside the enumerated set");
            seen[pos] = true;
        }
        assert!(seen.iter().all(|&s| s), "not all crop outcomes observed");
    }

    #[test]
    fn augment_rejects_bad_shapes_and_ranges() {
        let flat = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
        let cfg = AugmentConfig {
            hflip: true,
            translate_pixels: 0,
        };
        let mut rng = RngStream::new(0, stream::AUGMENT);
        assert!(augment_minibatch(&flat, &cfg, &mut rng).is_err());

        let img = Tensor::zeros(vec![1, 1, 2, 2]);
        let too_far = AugmentConfig {
            hflip: false,
            translate_pixels: 2,
        };
        assert!(augment_minibatch(&img, &too_far, &mut rng).is_err());
    }

    #[test]
    fn holdout_proportions() {
        let inputs = Tensor::zeros(vec![10, 1]);
        let ds = Dataset::new(inputs, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 2).unwrap();
        let out = holdout_split(&ds, 0.2, &mut data_rng()).unwrap();
        assert_eq!(out.split_len(Split::Train), 8);
        assert_eq!(out.split_len(Split::Val), 2);
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn holdout_large_round_numbers() {
        let inputs = Tensor::zeros(vec![50_000, 1]);
        let labels = vec![0usize; 50_000]
            .iter()
            .enumerate()
            .map(|(i, _)| i % 2)
            .collect();
        let ds = Dataset::new(inputs, labels, 2).unwrap();
        let out = holdout_split(&ds, 0.1, &mut data_rng()).unwrap();
        assert_eq!(out.split_len(Split::Train), 45_000);
        assert_eq!(out.split_len(Split::Val), 5_000);
    }

    #[test]
    fn holdout_same_seed_same_membership() {
        let mut rng1 = data_rng();
        let mut rng2 = data_rng();
        let ds = make_spirals(40, 2, 0.1, &mut rng1).unwrap();
        let ds2 = make_spirals(40, 2, 0.1, &mut rng2).unwrap();
        let a = holdout_split(&ds, 0.25, &mut rng1).unwrap();
        let b = holdout_split(&ds2, 0.25, &mut rng2).unwrap();
        assert_eq!(a.splits(), b.splits());
    }

    #[test]
    fn split_off_builds_three_way_splits() {
        let mut rng = data_rng();
        let ds = make_spirals(50, 2, 0.1, &mut rng).unwrap();
        let ds = split_off(&ds, 0.2, Split::Test, &mut rng).unwrap();
        let ds = holdout_split(&ds, 0.25, &mut rng).unwrap();
        assert_eq!(ds.split_len(Split::Test), 20);
        assert_eq!(ds.split_len(Split::Val), 20); // 25% of remaining 80
        assert_eq!(ds.split_len(Split::Train), 60);
    }

    #[test]
    fn split_off_rejects_bad_args() {
        let ds = Dataset::new(Tensor::zeros(vec![4, 1]), vec![0, 1, 0, 1], 2).unwrap();
        let mut rng = data_rng();
        assert!(split_off(&ds, 0.0, Split::Val, &mut rng).is_err());
        assert!(split_off(&ds, 1.0, Split::Val, &mut rng).is_err());
        assert!(split_off(&ds, 0.5, Split::Train, &mut rng).is_err());
        // round(2 · 0.1) = 0 → would leave val empty.
        let tiny = Dataset::new(Tensor::zeros(vec![2, 1]), vec![0, 1], 2).unwrap();
        assert!(split_off(&tiny, 0.1, Split::Val, &mut rng).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(Tensor::zeros(vec![3]), vec![0, 1, 0], 2).is_err());
        assert!(Dataset::new(Tensor::zeros(vec![3, 1]), vec![0, 1], 2).is_err());
        assert!(Dataset::new(Tensor::zeros(vec![2, 1]), vec![0, 2], 2).is_err());
        assert!(Dataset::new(Tensor::zeros(vec![2, 1]), vec![0, 1], 1).is_err());
    }

    #[test]
    fn gather_assembles_minibatches() {
        let inputs = Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let ds = Dataset::new(inputs, vec![0, 1, 0], 2).unwrap();
        let (x, y) = ds.gather(&[2, 0]).unwrap();
        assert_eq!(x.data(), &[5.0, 6.0, 1.0, 2.0]);
        assert_eq!(y, vec![0, 0]);
        assert!(ds.gather(&[3]).is_err());
        assert!(ds.gather(&[]).is_err());
    }
}
