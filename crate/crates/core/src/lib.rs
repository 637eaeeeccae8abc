//! Bayes error rate bounds from nonparametric divergence estimates.
//!
//! The crate estimates f-divergence functionals of two labelled samples with
//! a weighted ensemble of k-nearest-neighbour plug-in estimators (and, for
//! D̃, a minimal-spanning-tree estimator), then turns them into upper and
//! lower bounds on the Bayes error:
//!
//! ```
//! use bayesbound::{estimate_all_bounds, sample_gaussian_pair, BoundsConfig, Dataset, GaussianSpec};
//!
//! let spec = GaussianSpec::shifted(2, 2.0, 300, 1);
//! let data = Dataset::from(sample_gaussian_pair(&spec).unwrap());
//! let report = estimate_all_bounds(&data, &BoundsConfig::default()).unwrap();
//! for entry in &report.entries {
//!     assert!((0.0..=0.5).contains(&entry.estimate));
//! }
//! ```

pub mod bounds;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod functionals;
pub mod kdtree;
pub mod mst;
pub mod neighbors;
pub mod seeding;

pub use bounds::{
    bootstrap_ci, chernoff_upper_bound, dtilde_bounds, estimate_all_bounds, galpha_lower_bound, knn_dtilde, mst_dtilde,
    BootstrapConfig, BoundEntry, BoundSelection, BoundsConfig, BoundsReport, DTildeForm, Estimator,
};
pub use dataset::{
    load_distance_matrix, load_labeled_csv, pairwise_distances, sample_gaussian_pair, true_gaussian_ber, Class,
    Dataset, DistanceData, GaussianSpec, PointSet, TwoSampleData,
};
pub use ensemble::{
    base_estimate, ensemble_estimate, solve_weights, EnsembleConfig, EnsembleEstimator, WeightMode, WeightVector,
};
pub use error::{Error, Result};
pub use functionals::{bound_from_dphi, phi_eval, Family, FunctionalSpec, NumericPolicy};
pub use mst::{hp_dtilde_estimate, minimum_spanning_tree, MstNormalization, MstResult};
pub use neighbors::{density_profiles, knn_density, kth_neighbor_distance, DensityPair, NeighborIndex, ProfileMode};
