//! Spectral clustering for stochastic block models, the error exponent
//! J_min that predicts its exponential misclustering rate, and the
//! verification tooling around both: an oracle classifier with exact
//! binomial-difference tails, eigenvector perturbation diagnostics, and a
//! reproducible Monte Carlo experiment harness.

pub mod assignment;
pub mod diagnostics;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod exponents;
pub mod graph;
pub mod kmeans;
pub mod oracle;
pub mod pipeline;
pub mod procrustes;
pub mod rng;
pub mod sbm;

pub use error::{Error, Result};
pub use exponents::{
    chernoff_threshold, chernoff_upper, closed_form_i, compute_j, compute_j_min, exact_tail,
    j_objective, ExponentResult, TailDistribution,
};
pub use graph::Graph;
pub use kmeans::{kmeans, KMeansResult};
pub use oracle::{oracle_classify, oracle_threshold_form, OracleResult};
pub use pipeline::{
    embed, embed_masked, embed_op, spectral_cluster, trim, trim_with_const, ClusterOpts,
    SpectralClusterResult, SpectralEmbedding, TrimmedGraph,
};
pub use procrustes::procrustes_distance;
pub use sbm::{
    misclustering_loss, population_model, sample_sbm, CommunityAssignment, PopulationModel,
    SbmInstance,
};
