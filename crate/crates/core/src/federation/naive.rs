//! One-shot protocol: providers ship kernel blocks and hospitals ship
//! shuffled, noise-masked labels to the federator, which trains centrally.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::hospital::provider_block;
use super::message::{MessageKind, ProtocolMessage};
use super::parties::{Job, Parties};
use super::transcript::Transcript;
use super::transport::{Link, TransportKind};
use crate::data::PartitionedDataset;
use crate::kernel::{hadamard_compose, KernelBlock, KernelSpec};
use crate::landmarks::{noise_stream, shared_permutation, LandmarkSet, SharedSeed};
use crate::solver::{solve_rrls_cg, CgTrace, RrlsProblem};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveConfig {
    pub lambda: f64,
    pub toll: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub alpha0: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NaiveOutcome {
    pub alpha: Vec<f64>,
    pub trace: CgTrace,
    pub transcript: Transcript,
    /// Labels as recovered by the federator, stacked by hospital.
    pub labels: Vec<f64>,
    /// Kernel matrix as assembled by the federator.
    pub kernel: Matrix,
    pub train_time: Duration,
}

/// `pi(y) + eta`, with `pi(y)[i] = y[perm[i]]`.
pub fn mask_labels(y: &[f64], seed: u64, hospital: u32) -> Vec<f64> {
    let perm = shared_permutation(&SharedSeed::new(seed, format!("shuffle/h{hospital}")), y.len());
    let eta = noise_stream(&SharedSeed::new(seed, format!("label-noise/h{hospital}")), y.len());
    perm.iter().zip(&eta).map(|(&p, e)| y[p] + e).collect()
}

/// Inverse of [`mask_labels`] for labels in {-1, +1}. Removing the noise
/// can leave a rounding error, so values are snapped to the nearest label.
pub fn unmask_labels(masked: &[f64], seed: u64, hospital: u32) -> Vec<f64> {
    let perm = shared_permutation(&SharedSeed::new(seed, format!("shuffle/h{hospital}")), masked.len());
    let eta = noise_stream(&SharedSeed::new(seed, format!("label-noise/h{hospital}")), masked.len());
    let mut y = vec![0.0; masked.len()];
    for (i, (&m, e)) in masked.iter().zip(&eta).enumerate() {
        y[perm[i]] = if m - e > 0.0 { 1.0 } else { -1.0 };
    }
    y
}

fn naive_hospital(id: u32, seed: u64, blocks: Vec<(u32, KernelBlock)>, y: Vec<f64>, mut link: Box<dyn Link>) -> Result<()> {
    link.send(&ProtocolMessage::seed_checksum(id, SharedSeed::new(seed, "").checksum()))?;
    for (provider, b) in blocks {
        // Relayed on the provider's behalf.
        let data: Vec<f64> = b.values.transpose().iter().copied().collect();
        link.send(&ProtocolMessage::new(MessageKind::NaiveKernelBlock, provider, 0, b.nrows(), b.ncols(), data))?;
    }
    let masked = mask_labels(&y, seed, id);
    link.send(&ProtocolMessage::new(MessageKind::MaskedLabels, id, 0, masked.len(), 1, masked))?;
    let msg = link.recv()?;
    if msg.kind != MessageKind::Stop {
        return Err(Error::Protocol(format!("hospital {id} received {}", msg.kind)));
    }
    Ok(())
}

pub fn naive_protocol(
    data: &PartitionedDataset,
    landmarks: &LandmarkSet,
    spec: &KernelSpec,
    cfg: &NaiveConfig,
    transport: TransportKind,
) -> Result<NaiveOutcome> {
    let started = Instant::now();
    let topo = &data.topology;
    topo.validate()?;
    let mut jobs = Vec::new();
    for h in &topo.hospitals {
        let blocks = topo
            .providers_of(h.id)
            .iter()
            .map(|o| Ok((o.id, provider_block(data, h.id, o.id, landmarks, spec)?)))
            .collect::<Result<Vec<_>>>()?;
        let y = data.labels_of(h.id).ok_or_else(|| Error::MissingData(format!("labels of hospital {}", h.id)))?.to_vec();
        let (id, seed) = (h.id, cfg.seed);
        let job: Job<()> = Box::new(move |link| naive_hospital(id, seed, blocks, y, link));
        jobs.push((h.id, job));
    }
    let mut parties = Parties::spawn(topo.federator, jobs, transport)?;
    match federate(&mut parties, data, landmarks, cfg) {
        Ok((kernel, labels)) => {
            let solved = RrlsProblem::new(kernel.clone(), labels.clone(), cfg.lambda)
                .and_then(|p| solve_rrls_cg(&p, &cfg.alpha0, cfg.toll, cfg.max_epochs));
            let stop = ProtocolMessage::stop(topo.federator, 0, solved.is_err());
            parties.broadcast(&stop)?;
            parties.join()?;
            let (alpha, trace) = solved?;
            Ok(NaiveOutcome { alpha, trace, transcript: parties.transcript, labels, kernel, train_time: started.elapsed() })
        }
        Err(e) => {
            parties.abort(0);
            Err(e)
        }
    }
}

fn federate(parties: &mut Parties<()>, data: &PartitionedDataset, landmarks: &LandmarkSet, cfg: &NaiveConfig) -> Result<(Matrix, Vec<f64>)> {
    let topo = &data.topology;
    let checksum = SharedSeed::new(cfg.seed, "").checksum();
    let mut stacked: Vec<KernelBlock> = Vec::new();
    let mut labels = Vec::new();
    for h in &topo.hospitals {
        let seed = parties.recv(h.id)?;
        seed.expect(MessageKind::LandmarkSeed, h.id, 0, Some(1))?;
        if seed.checksum()? != checksum {
            return Err(Error::SeedMismatch { party: h.id });
        }
        let n_h = h.sample_ids.len();
        let mut blocks = Vec::new();
        for o in topo.providers_of(h.id) {
            let msg = parties.recv(h.id)?;
            msg.expect(MessageKind::NaiveKernelBlock, o.id, 0, Some(n_h))?;
            if msg.cols != landmarks.m {
                return Err(Error::DimensionMismatch(format!("block from provider {} has {} columns", o.id, msg.cols)));
            }
            blocks.push(KernelBlock {
                values: Matrix::from_row_slice(n_h, msg.cols, &msg.data),
                rows: h.sample_ids.clone(),
                features: o.features.clone(),
            });
        }
        stacked.push(hadamard_compose(&blocks)?);
        let masked = parties.recv(h.id)?;
        masked.expect(MessageKind::MaskedLabels, h.id, 0, Some(n_h))?;
        labels.extend(unmask_labels(&masked.data, cfg.seed, h.id));
    }
    let n: usize = stacked.iter().map(KernelBlock::nrows).sum();
    let mut k = Matrix::zeros(n, landmarks.m);
    let mut row = 0;
    for b in &stacked {
        k.rows_mut(row, b.nrows()).copy_from(&b.values);
        row += b.nrows();
    }
    Ok((k, labels))
}
