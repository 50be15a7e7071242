//! Builders shared by the criterion benchmarks.

use stochdepth::{
    make_spirals, split_off, Dataset, Flavor, GroupSpec, InputShape, Network, NetworkSpec,
    RngStream, Split, StreamSet, Tensor,
};

/// Two-feature dense residual spec with one uniform-width group.
pub fn dense_spec(blocks: usize, width: usize) -> NetworkSpec {
    NetworkSpec {
        flavor: Flavor::Dense,
        input: InputShape::Features { features: 2 },
        groups: vec![GroupSpec { blocks, width }],
        num_classes: 2,
    }
}

pub fn dense_net(blocks: usize, width: usize, seed: u64) -> Network {
    let mut streams = StreamSet::new(seed);
    Network::init(dense_spec(blocks, width), &mut streams.weight_init).unwrap()
}

/// Two-class spirals with a validation holdout, ready for `train_epoch`.
pub fn spirals_dataset(n_per_class: usize, seed: u64) -> Dataset {
    let mut streams = StreamSet::new(seed);
    let ds = make_spirals(n_per_class, 2, 0.08, &mut streams.data).unwrap();
    split_off(&ds, 0.2, Split::Val, &mut streams.data).unwrap()
}

pub fn random_batch(rows: usize, features: usize, seed: u64) -> Tensor {
    let mut rng = RngStream::new(seed, stochdepth::rng::stream::DATA);
    let data = (0..rows * features)
        .map(|_| rng.uniform01() * 2.0 - 1.0)
        .collect();
    Tensor::new(vec![rows, features], data).unwrap()
}
