//! Fixtures shared by the benchmarks.

use fedkrls::{make_toy, Dataset, partition, sample_landmarks, KernelSpec, LandmarkSet, PartitionedDataset, Sampler, SamplerStats, SharedSeed};

pub struct Fixture {
    pub train: Dataset,
    pub data: PartitionedDataset,
    pub landmarks: LandmarkSet,
    pub spec: KernelSpec,
}

/// Toy problem with `n` training samples over `n_hospitals` hospitals and
/// `m` landmarks drawn from the training set.
pub fn toy(n: usize, m: usize, n_hospitals: usize) -> Fixture {
    let (train, _, topo) = make_toy(n, 1, n_hospitals, 7).expect("toy data");
    let landmarks = sample_landmarks(Sampler::P, m, &SamplerStats::Train(&train.x), &SharedSeed::new(7, "landmarks")).expect("landmarks");
    let spec = KernelSpec::shared(1.0 / train.d() as f64);
    let data = partition(&train, &topo).expect("partition");
    Fixture { train, data, landmarks, spec }
}
