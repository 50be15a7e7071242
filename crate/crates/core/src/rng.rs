//! Deterministic, stream-isolated random number generation.
//!
//! Every source of randomness in a run (weight initialization, block gates,
//! shuffling, augmentation, synthetic data) gets its own counter-based stream
//! of a single ChaCha12 generator keyed by the run seed. Streams are
//! structurally isolated: drawing more or fewer values from one stream never
//! shifts the values produced by another, so e.g. disabling augmentation does
//! not change which blocks are dropped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed stream ids, one per randomness consumer.
pub mod stream {
    pub const WEIGHT_INIT: u64 = 0;
    pub const GATES: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const DATA: u64 = 4;
}

/// One independent stream of a seeded ChaCha12 generator.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha12Rng,
}

/// Serializable position of a stream, sufficient to resume it exactly.
///
/// `word_pos` is a 128-bit counter stored as a decimal string so it survives
/// JSON round-trips without loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: String,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform sample in `[0, 1)`.
    pub fn uniform01(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Zero-mean normal sample with standard deviation `sigma >= 0`.
    pub fn normal(&mut self, sigma: f64) -> Result<f64> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidArg(format!("normal: bad sigma {sigma}")));
        }
        let z: f64 = self.rng.sample(StandardNormal);
        Ok(z * sigma)
    }

    /// Bernoulli sample as 0.0/1.0 with success probability `p in [0, 1]`.
    ///
    /// Implemented as `uniform01() < p`, so `p = 1` always yields 1 and
    /// `p = 0` always yields 0 — no edge-case leakage at the endpoints.
    pub fn bernoulli(&mut self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArg(format!("bernoulli: bad p {p}")));
        }
        Ok(if self.uniform01() < p { 1.0 } else { 0.0 })
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }

    pub fn draw_uniform01(&mut self, shape: Vec<usize>) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.uniform01()).collect();
        Tensor::new(shape, data).expect("shape/data sizes agree by construction")
    }

    pub fn draw_normal(&mut self, sigma: f64, shape: Vec<usize>) -> Result<Tensor> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidArg(format!("draw_normal: bad sigma {sigma}")));
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.normal(sigma)?);
        }
        Tensor::new(shape, data)
    }

    pub fn draw_bernoulli(&mut self, p: f64, shape: Vec<usize>) -> Result<Tensor> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArg(format!("draw_bernoulli: bad p {p}")));
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.bernoulli(p)?);
        }
        Tensor::new(shape, data)
    }

    /// Capture the exact position of this stream.
    pub fn capture(&self) -> StreamState {
        StreamState {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.rng.get_word_pos().to_string(),
        }
    }

    /// Rebuild a stream at a previously captured position.
    pub fn restore(state: &StreamState) -> Result<Self> {
        let word_pos: u128 = state
            .word_pos
            .parse()
            .map_err(|e| Error::Parse(format!("bad word_pos {:?}: {e}", state.word_pos)))?;
        let mut s = RngStream::new(state.seed, state.stream);
        s.rng.set_word_pos(word_pos);
        Ok(s)
    }
}

/// The full set of named streams used by a training run.
#[derive(Debug, Clone)]
pub struct StreamSet {
    pub weight_init: RngStream,
    pub gates: RngStream,
    pub shuffle: RngStream,
    pub augment: RngStream,
    pub data: RngStream,
}

impl StreamSet {
    pub fn new(seed: u64) -> Self {
        StreamSet {
            weight_init: RngStream::new(seed, stream::WEIGHT_INIT),
            gates: RngStream::new(seed, stream::GATES),
            shuffle: RngStream::new(seed, stream::SHUFFLE),
            augment: RngStream::new(seed, stream::AUGMENT),
            data: RngStream::new(seed, stream::DATA),
        }
    }

    pub fn capture(&self) -> Vec<StreamState> {
        vec![
            self.weight_init.capture(),
            self.gates.capture(),
            self.shuffle.capture(),
            self.augment.capture(),
            self.data.capture(),
        ]
    }

    pub fn restore(states: &[StreamState]) -> Result<Self> {
        let find = |id: u64| -> Result<RngStream> {
            let st = states
                .iter()
                .find(|s| s.stream == id)
                .ok_or_else(|| Error::Parse(format!("missing rng stream {id}")))?;
            RngStream::restore(st)
        };
        Ok(StreamSet {
            weight_init: find(stream::WEIGHT_INIT)?,
            gates: find(stream::GATES)?,
            shuffle: find(stream::SHUFFLE)?,
            augment: find(stream::AUGMENT)?,
            data: find(stream::DATA)?,
        })
    }
}
