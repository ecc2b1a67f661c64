//! Federator, hospitals and omics-center providers, and the two training
//! protocols that run between them.

pub mod fedcg;
pub mod hospital;
pub mod message;
pub mod naive;
mod parties;
pub mod predict;
pub mod transcript;
pub mod transport;
pub mod wire;

pub use fedcg::{run_fedcg, FedCgConfig, FedCgOutcome, FedCgSession, FedState};
pub use hospital::{hospital_kernel, provider_block, HospitalNode, HospitalReport};
pub use message::{MessageKind, ProtocolMessage};
pub use naive::{naive_protocol, NaiveConfig, NaiveOutcome};
pub use predict::{predict, Prediction};
pub use transcript::{AuditReport, Direction, Transcript};
pub use transport::{Link, TransportKind};

pub use crate::topology::{Hospital, OmicsCenter, Topology};
