//! Random-Nystrom kernel regularized least squares with hybrid-federated
//! training.
//!
//! The crate covers the full pipeline: RBF kernel blocks and their Hadamard
//! composition across feature providers, landmark sampling under a shared
//! seed, centralized reference solvers, the naive and the secure iterative
//! (FedCG) federated protocols, dataset handling, and an attack bench that
//! measures how much of the sample-to-sample distance matrix leaks through
//! kernel blocks.

pub mod attacks;
pub mod data;
pub mod error;
pub mod exact;
pub mod federation;
pub mod kernel;
pub mod landmarks;
pub mod metrics;
pub mod solver;
pub mod topology;

pub use error::{Error, Result};

/// Dense `f64` matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense `f64` column vector.
pub type Vector = nalgebra::DVector<f64>;

pub use attacks::{
    alternating_descent, assemble_edm, leakage_report, rank_alternation, soft_impute,
    Algorithm, CompletionResult, EdmInstance, LeakageCell, LeakageOutcome,
};
pub use data::{
    load_csv, make_toy, normalize_train_test, partition, stratified_split, Dataset,
    FeatureBlock, Normalization, PartitionedDataset,
};
pub use exact::ExactSum;
pub use federation::{
    naive_protocol, predict, run_fedcg, FedCgConfig, FedCgOutcome, FedCgSession, FedState, MessageKind,
    Prediction, ProtocolMessage, Transcript, TransportKind,
};
pub use kernel::{hadamard_compose, neg_log_to_distances, rbf_block, GammaMode, KernelBlock, KernelSpec};
pub use landmarks::{noise_stream, sample_landmarks, LandmarkSet, Sampler, SamplerStats, SharedSeed};
pub use metrics::{Confusion, MeanSpread};
pub use solver::{
    solve_krls_closed_form, solve_rrls_cg, solve_rrls_direct, CgRecord, CgState, CgTrace,
    RrlsProblem,
};
pub use topology::{Hospital, OmicsCenter, Topology};
