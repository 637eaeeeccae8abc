//! Fixtures shared by the benchmarks.

use bayesbound::{pairwise_distances, sample_gaussian_pair, Dataset, DistanceData, GaussianSpec, TwoSampleData};

/// Unit-variance Gaussian pair `Δ = 2` apart with `per_class` points per
/// class, fixed seed.
pub fn gaussian_pair(d: usize, per_class: usize) -> TwoSampleData {
    sample_gaussian_pair(&GaussianSpec::shifted(d, 2.0, per_class, 0xBE7C)).expect("valid fixture spec")
}

pub fn gaussian_dataset(d: usize, per_class: usize) -> Dataset {
    Dataset::from(gaussian_pair(d, per_class))
}

pub fn gaussian_distances(d: usize, per_class: usize) -> DistanceData {
    pairwise_distances(&gaussian_pair(d, per_class))
}
