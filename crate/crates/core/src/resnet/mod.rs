//! Residual networks with gateable blocks.

pub mod block;
pub mod net;
pub mod oracle;
pub mod spec;

pub use block::{identity_path, identity_path_backward, BlockCache, CoreLayer, ResBlock};
pub use net::{
    BlockTrace, ForwardTrace, FrozenMode, GradientSet, Network, Stem, TrainMode,
};
pub use oracle::{ensemble_oracle, ensemble_oracle_probs, rescaled_ensemble_gap};
pub use spec::{Flavor, GroupSpec, InputShape, NetworkSpec, ResBlockSpec};
