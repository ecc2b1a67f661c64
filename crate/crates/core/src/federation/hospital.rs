//! Hospital actor: holds its patients' labels and composed kernel block and
//! answers the federator's requests.

use serde::{Deserialize, Serialize};

use super::message::{MessageKind, ProtocolMessage};
use super::transport::Link;
use super::FedCgConfig;
use crate::data::PartitionedDataset;
use crate::exact::{self, ExactSum};
use crate::kernel::{hadamard_compose, rbf_block_labeled, KernelBlock, KernelSpec};
use crate::landmarks::{noise_stream, LandmarkSet, SharedSeed};
use crate::solver::{accumulate_transpose, ktkp_partial, reg_weights, row_dots, scalar_with, CgState};
use crate::{Error, Matrix, Result};

/// Kernel block a provider computes for one hospital's patients over its own
/// features.
pub fn provider_block(
    data: &PartitionedDataset,
    hospital: u32,
    provider: u32,
    landmarks: &LandmarkSet,
    spec: &KernelSpec,
) -> Result<KernelBlock> {
    let b = data.block(hospital, provider).ok_or(Error::ProviderUnreachable { hospital, provider })?;
    rbf_block_labeled(&b.values, &landmarks.features(&b.features), spec, b.sample_ids.clone(), b.features.clone())
}

/// The hospital's full kernel block, composed from its providers' blocks.
pub fn hospital_kernel(data: &PartitionedDataset, hospital: u32, landmarks: &LandmarkSet, spec: &KernelSpec) -> Result<KernelBlock> {
    let providers = data.topology.providers_of(hospital);
    if providers.is_empty() {
        return Err(Error::MissingData(format!("hospital {hospital} has no providers")));
    }
    let blocks = providers
        .iter()
        .map(|o| provider_block(data, hospital, o.id, landmarks, spec))
        .collect::<Result<Vec<_>>>()?;
    hadamard_compose(&blocks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HospitalReport {
    pub id: u32,
    /// State digest after initialization and after every epoch.
    pub digests: Vec<[u8; 32]>,
    pub alpha: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct HospitalNode {
    pub id: u32,
    /// `K_h^T`, so that sample rows are contiguous.
    kt: Matrix,
    y: Vec<f64>,
    eta: Vec<f64>,
    lambda: f64,
    reg_weight: f64,
    toll: f64,
    max_epochs: usize,
    seed: SharedSeed,
    alpha0: Vec<f64>,
}

impl HospitalNode {
    pub fn build(id: u32, data: &PartitionedDataset, landmarks: &LandmarkSet, spec: &KernelSpec, cfg: &FedCgConfig) -> Result<Self> {
        let index = data
            .topology
            .hospitals
            .iter()
            .position(|h| h.id == id)
            .ok_or_else(|| Error::InvalidTopology(format!("unknown hospital {id}")))?;
        let k = hospital_kernel(data, id, landmarks, spec)?;
        let y = data.labels_of(id).ok_or_else(|| Error::MissingData(format!("labels of hospital {id}")))?.to_vec();
        let seed_value = cfg.hospital_seeds.get(&id).copied().unwrap_or(cfg.seed);
        let seed = SharedSeed::new(seed_value, format!("noise/h{id}"));
        let eta = if cfg.masking { noise_stream(&seed, y.len()) } else { vec![0.0; y.len()] };
        if cfg.alpha0.len() != landmarks.m {
            return Err(Error::DimensionMismatch(format!("alpha0 has {} entries for {} landmarks", cfg.alpha0.len(), landmarks.m)));
        }
        Ok(Self {
            id,
            kt: k.values.transpose(),
            y,
            eta,
            lambda: cfg.lambda,
            reg_weight: reg_weights(data.topology.hospitals.len())[index],
            toll: cfg.toll,
            max_epochs: cfg.max_epochs,
            seed,
            alpha0: cfg.alpha0.clone(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn reg_weight(&self) -> f64 {
        self.reg_weight
    }

    /// `(K_h^T K_h p + w_h lambda p, K_h alpha - y_h + eta_h)`, each entry
    /// rounded once from its exact value.
    pub fn federated_gradient(&self, alpha: &[f64], p: &[f64], eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ktkp = exact::round_all(&ktkp_partial(&self.kt, p, self.lambda, self.reg_weight));
        let v = self.residual_terms(alpha, eta).chunks_exact(3).map(exact::sum).collect();
        (ktkp, v)
    }

    fn residual_terms(&self, alpha: &[f64], eta: &[f64]) -> Vec<f64> {
        row_dots(&self.kt, alpha)
            .into_iter()
            .zip(&self.y)
            .zip(eta)
            .flat_map(|((d, &y), &e)| [d, -y, e])
            .collect()
    }

    fn init_messages(&self) -> [ProtocolMessage; 3] {
        let m = self.kt.nrows();
        let terms = self.residual_terms(&self.alpha0, &self.eta);
        let masked: Vec<f64> = terms.chunks_exact(3).map(exact::sum).collect();
        let mut denoise = vec![ExactSum::new(); m];
        accumulate_transpose(&self.kt, &terms, 3, &mut denoise);
        let mut noisy = vec![ExactSum::new(); m];
        accumulate_transpose(&self.kt, &self.eta, 1, &mut noisy);
        [
            ProtocolMessage::new(MessageKind::MaskedResidual, self.id, 0, masked.len(), 1, masked),
            ProtocolMessage::from_expansions(MessageKind::NoisyGradTerm, self.id, 0, &noisy),
            ProtocolMessage::from_expansions(MessageKind::DenoiseTerm, self.id, 0, &denoise),
        ]
    }

    fn epoch_messages(&self, state: &CgState) -> [ProtocolMessage; 2] {
        let epoch = state.epoch as u64 + 1;
        let acc = ktkp_partial(&self.kt, &state.p, self.lambda, self.reg_weight);
        let scalar = scalar_with(&state.p, &acc);
        [
            ProtocolMessage::from_expansions(MessageKind::PartialKtKp, self.id, epoch, &acc),
            ProtocolMessage::from_expansions(MessageKind::PartialScalar, self.id, epoch, std::slice::from_ref(&scalar)),
        ]
    }

    fn wants_more(&self, state: &CgState) -> bool {
        !state.converged(self.toll) && state.epoch < self.max_epochs
    }

    /// Runs the hospital side of FedCG until the federator says stop.
    pub fn run(self, mut link: Box<dyn Link>) -> Result<HospitalReport> {
        let m = self.kt.nrows();
        link.send(&ProtocolMessage::seed_checksum(self.id, self.seed.checksum()))?;
        for msg in self.init_messages() {
            link.send(&msg)?;
        }
        let mut state: Option<CgState> = None;
        let mut digests = Vec::new();
        let mut failed = false;
        loop {
            let msg = link.recv()?;
            match msg.kind {
                MessageKind::Stop => break,
                MessageKind::Broadcast if failed => {
                    return Err(Error::Protocol(format!("hospital {}: broadcast after a failed update", self.id)));
                }
                MessageKind::Broadcast => {
                    let st = match state.as_mut() {
                        None => {
                            if msg.data.len() != m || msg.epoch != 0 {
                                return Err(Error::Protocol(format!("hospital {}: malformed initial broadcast", self.id)));
                            }
                            state.insert(CgState::from_gradient(self.alpha0.clone(), msg.data.clone()))
                        }
                        Some(st) => {
                            if msg.data.len() != m + 1 || msg.epoch != st.epoch as u64 + 1 {
                                return Err(Error::Protocol(format!("hospital {}: malformed broadcast", self.id)));
                            }
                            // A failed step is failed at the server too; it
                            // will follow up with an abort.
                            if st.apply(&msg.data[..m], msg.data[m], self.toll).is_err() {
                                failed = true;
                                continue;
                            }
                            st
                        }
                    };
                    digests.push(st.digest());
                    if self.wants_more(st) {
                        let st = st.clone();
                        for out in self.epoch_messages(&st) {
                            link.send(&out)?;
                        }
                    }
                }
                other => return Err(Error::Protocol(format!("hospital {} received {other}", self.id))),
            }
        }
        Ok(HospitalReport { id: self.id, digests, alpha: state.map(|s| s.alpha) })
    }
}
