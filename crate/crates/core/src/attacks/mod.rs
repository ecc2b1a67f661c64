//! Distance-matrix completion attacks on leaked kernel blocks.

pub mod alternating_descent;
pub mod edm;
pub mod rank_alternation;
pub mod report;
pub mod soft_impute;

pub use alternating_descent::alternating_descent;
pub use edm::{assemble_edm, edm_from_blocks, squared_distances, CompletionResult, EdmInstance};
pub use rank_alternation::rank_alternation;
pub use report::{leakage_report, Algorithm, GammaSetting, LeakageCell, LeakageConfig, LeakageOutcome};
pub use soft_impute::{soft_impute, soft_impute_matrix};
