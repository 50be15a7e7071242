//! Stochastic-depth training of deep residual networks.
//!
//! This crate implements residual networks whose residual branches are
//! switched off at random during training — each block survives a mini-batch
//! with its own probability, and dropped blocks contribute only their identity
//! path. At test time every branch runs, scaled by its survival probability.
//! Shorter effective networks train faster and regularize better, while the
//! full depth is recovered for inference.
//!
//! The crate is CPU-only, `f64` throughout, and fully deterministic given a
//! seed: weight init, gate sampling, shuffling, augmentation and synthetic
//! data each draw from an isolated RNG stream.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod resnet;
pub mod rng;
pub mod stochastic;
pub mod tensor;
pub mod train;

pub use checkpoint::{Checkpoint, NamedArray};
pub use data::{
    augment_minibatch, holdout_split, load_image_csv, make_spirals, split_off, standardize,
    AugmentConfig, Dataset, Split,
};
pub use error::{Error, Result};
pub use resnet::{
    ensemble_oracle, Flavor, ForwardTrace, FrozenMode, GradientSet, GroupSpec, InputShape,
    Network, NetworkSpec, ResBlock, ResBlockSpec, TrainMode,
};
pub use rng::{RngStream, StreamSet, StreamState};
pub use stochastic::{
    enumerate_gate_patterns, sample_gates, DecayRule, GateVector, SurvivalSchedule,
};
pub use tensor::Tensor;
pub use train::{
    evaluate, fit, select_best, sgd_step, train_epoch, DepthMode, EpochMetrics, FitConfig,
    FitResult, LrSchedule, OptimizerState, Warmup,
};
