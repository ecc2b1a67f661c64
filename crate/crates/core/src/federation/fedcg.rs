//! The federator side of secure iterative training.
//!
//! Hospitals never reveal labels or kernel rows. At initialization each
//! hospital sends its masked residual together with `K_h^T eta_h` and
//! `K_h^T v_h`; the federator subtracts the two aggregates, which removes the
//! noise exactly, and broadcasts the starting gradient. Each epoch the
//! hospitals send their share of `K^T K p` and of `p^T K^T K p`, and the
//! federator broadcasts the totals. Every party then applies the same CG
//! update, so all states stay bit-identical.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::hospital::{HospitalNode, HospitalReport};
use super::message::{MessageKind, ProtocolMessage};
use super::parties::{Job, Parties};
use super::transcript::Transcript;
use super::transport::{Link, TransportKind};
use crate::data::PartitionedDataset;
use crate::exact::{self, ExactSum};
use crate::kernel::KernelSpec;
use crate::landmarks::{LandmarkSet, SharedSeed};
use crate::solver::{CgState, CgTrace};
use crate::{Error, Result};

/// CG state replicated at the federator and every hospital.
pub type FedState = CgState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedCgConfig {
    pub lambda: f64,
    pub toll: f64,
    pub max_epochs: usize,
    /// Shared seed provisioned to every party.
    pub seed: u64,
    pub alpha0: Vec<f64>,
    /// Adds synchronized noise to the residuals hospitals send.
    pub masking: bool,
    /// Seeds as actually provisioned at particular hospitals, when they
    /// differ from `seed`. Any difference aborts the run at the handshake.
    #[serde(default)]
    pub hospital_seeds: BTreeMap<u32, u64>,
}

impl FedCgConfig {
    pub fn new(m: usize, lambda: f64, toll: f64, max_epochs: usize, seed: u64) -> Self {
        Self { lambda, toll, max_epochs, seed, alpha0: vec![0.0; m], masking: true, hospital_seeds: BTreeMap::new() }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if !(self.toll > 0.0) {
            return Err(Error::InvalidSpec(format!("toll must be positive, got {}", self.toll)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidSpec(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if self.alpha0.len() != m {
            return Err(Error::DimensionMismatch(format!("alpha0 has {} entries for {m} landmarks", self.alpha0.len())));
        }
        if self.alpha0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("alpha0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FedCgOutcome {
    pub alpha: Vec<f64>,
    pub state: FedState,
    pub trace: CgTrace,
    pub transcript: Transcript,
    /// State digests after initialization and every epoch, per party
    /// (the federator under its own id).
    pub digests: BTreeMap<u32, Vec<[u8; 32]>>,
    /// Final coefficients as held by each hospital.
    pub hospital_alpha: BTreeMap<u32, Vec<f64>>,
    pub train_time: Duration,
}

impl FedCgOutcome {
    /// True when every party went through the same sequence of states.
    pub fn replicated(&self) -> bool {
        let mut it = self.digests.values();
        let first = it.next();
        it.all(|d| Some(d) == first)
    }
}

pub struct FedCgSession {
    cfg: FedCgConfig,
    m: usize,
    parties: Parties<HospitalReport>,
    state: Option<FedState>,
    trace: CgTrace,
    digests: Vec<[u8; 32]>,
    done: bool,
    aborted: bool,
    started: Instant,
}

impl FedCgSession {
    /// Builds every hospital's kernel block from its providers and starts
    /// the hospital actors.
    pub fn start(
        data: &PartitionedDataset,
        landmarks: &LandmarkSet,
        spec: &KernelSpec,
        cfg: FedCgConfig,
        transport: TransportKind,
    ) -> Result<Self> {
        let started = Instant::now();
        data.topology.validate()?;
        cfg.validate(landmarks.m)?;
        spec.validate(landmarks.m)?;
        let jobs = data
            .topology
            .hospitals
            .iter()
            .map(|h| {
                let node = HospitalNode::build(h.id, data, landmarks, spec, &cfg)?;
                let job: Job<HospitalReport> = Box::new(move |link: Box<dyn Link>| node.run(link));
                Ok((h.id, job))
            })
            .collect::<Result<Vec<_>>>()?;
        let parties = Parties::spawn(data.topology.federator, jobs, transport)?;
        Ok(Self {
            m: landmarks.m,
            cfg,
            parties,
            state: None,
            trace: CgTrace::default(),
            digests: Vec::new(),
            done: false,
            aborted: false,
            started,
        })
    }

    pub fn state(&self) -> Option<&FedState> {
        self.state.as_ref()
    }

    pub fn trace(&self) -> &CgTrace {
        &self.trace
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn guarded<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        if self.aborted {
            return Err(Error::Protocol("session was aborted".into()));
        }
        let r = f(self);
        if r.is_err() {
            let epoch = self.state.as_ref().map_or(0, |s| s.epoch as u64);
            self.parties.abort(epoch);
            self.aborted = true;
            self.done = true;
        }
        r
    }

    /// Handshake and starting gradient. Afterwards `p = r = -G` everywhere.
    pub fn initialize(&mut self) -> Result<&FedState> {
        if self.state.is_some() {
            return Err(Error::Protocol("already initialized".into()));
        }
        self.guarded(Self::initialize_inner)?;
        Ok(self.state.as_ref().expect("initialized"))
    }

    fn initialize_inner(&mut self) -> Result<()> {
        let checksum = SharedSeed::new(self.cfg.seed, "").checksum();
        for id in self.parties.ids.clone() {
            let msg = self.parties.recv(id)?;
            msg.expect(MessageKind::LandmarkSeed, id, 0, Some(1))?;
            if msg.checksum()? != checksum {
                return Err(Error::SeedMismatch { party: id });
            }
        }
        let mut total = vec![ExactSum::new(); self.m];
        for id in self.parties.ids.clone() {
            // Masked residuals are part of the exchange but not needed for
            // the aggregate.
            self.parties.recv(id)?.expect(MessageKind::MaskedResidual, id, 0, None)?;
            let noisy = self.parties.recv(id)?;
            noisy.expect(MessageKind::NoisyGradTerm, id, 0, Some(self.m))?;
            let denoise = self.parties.recv(id)?;
            denoise.expect(MessageKind::DenoiseTerm, id, 0, Some(self.m))?;
            for (j, acc) in total.iter_mut().enumerate() {
                acc.add_expansion(denoise.row(j));
                acc.sub_expansion(noisy.row(j));
            }
        }
        for (acc, &a) in total.iter_mut().zip(&self.cfg.alpha0) {
            acc.add_product(self.cfg.lambda, a);
        }
        let g = exact::round_all(&total);
        let fed = self.parties.federator;
        self.parties.broadcast(&ProtocolMessage::vector(MessageKind::Broadcast, fed, 0, g.clone()))?;
        let state = CgState::from_gradient(self.cfg.alpha0.clone(), g);
        self.trace.records.push(state.initial_record());
        self.digests.push(state.digest());
        self.state = Some(state);
        self.check_stop()
    }

    fn check_stop(&mut self) -> Result<()> {
        let state = self.state.as_ref().expect("initialized");
        self.trace.converged = state.converged(self.cfg.toll);
        self.trace.stop_epoch = state.epoch;
        if self.trace.converged || state.epoch >= self.cfg.max_epochs {
            let stop = ProtocolMessage::stop(self.parties.federator, state.epoch as u64, false);
            self.parties.broadcast(&stop)?;
            self.done = true;
        }
        Ok(())
    }

    /// One synchronized CG update.
    pub fn epoch(&mut self) -> Result<&FedState> {
        if self.state.is_none() {
            return Err(Error::Protocol("not initialized".into()));
        }
        if self.done {
            return Err(Error::Protocol("run already stopped".into()));
        }
        self.guarded(Self::epoch_inner)?;
        Ok(self.state.as_ref().expect("initialized"))
    }

    fn epoch_inner(&mut self) -> Result<()> {
        let epoch = self.state.as_ref().expect("initialized").epoch as u64 + 1;
        let mut acc = vec![ExactSum::new(); self.m];
        let mut scalar = ExactSum::new();
        for id in self.parties.ids.clone() {
            let part = self.parties.recv(id)?;
            part.expect(MessageKind::PartialKtKp, id, epoch, Some(self.m))?;
            let s = self.parties.recv(id)?;
            s.expect(MessageKind::PartialScalar, id, epoch, Some(1))?;
            for (j, a) in acc.iter_mut().enumerate() {
                a.add_expansion(part.row(j));
            }
            scalar.add_expansion(s.row(0));
        }
        let ktkp = exact::round_all(&acc);
        let pktkp = scalar.round();
        let state = self.state.as_mut().expect("initialized");
        let record = state.apply(&ktkp, pktkp, self.cfg.toll)?;
        let mut payload = ktkp;
        payload.push(pktkp);
        let fed = self.parties.federator;
        self.parties.broadcast(&ProtocolMessage::vector(MessageKind::Broadcast, fed, epoch, payload))?;
        self.trace.records.push(record);
        let digest = self.state.as_ref().expect("initialized").digest();
        self.digests.push(digest);
        self.check_stop()
    }

    /// Joins the hospitals and checks that every party ended in the same
    /// state history.
    pub fn finish(mut self) -> Result<FedCgOutcome> {
        if self.aborted {
            return Err(Error::Protocol("session was aborted".into()));
        }
        let Some(state) = self.state.clone() else {
            return Err(Error::Protocol("not initialized".into()));
        };
        if !self.done {
            let stop = ProtocolMessage::stop(self.parties.federator, state.epoch as u64, false);
            self.parties.broadcast(&stop)?;
        }
        let reports = self.parties.join()?;
        let train_time = self.started.elapsed();
        let mut digests = BTreeMap::from([(self.parties.federator, self.digests.clone())]);
        let mut hospital_alpha = BTreeMap::new();
        for (id, r) in reports {
            if r.digests != self.digests {
                return Err(Error::Protocol(format!("hospital {id} state diverged from the federator")));
            }
            digests.insert(id, r.digests);
            if let Some(a) = r.alpha {
                hospital_alpha.insert(id, a);
            }
        }
        Ok(FedCgOutcome {
            alpha: state.alpha.clone(),
            state,
            trace: self.trace,
            transcript: std::mem::take(&mut self.parties.transcript),
            digests,
            hospital_alpha,
            train_time,
        })
    }

    pub fn run(mut self) -> Result<FedCgOutcome> {
        self.initialize()?;
        while !self.done {
            self.epoch()?;
        }
        self.finish()
    }
}

/// Convenience wrapper: start, run to completion, finish.
pub fn run_fedcg(
    data: &PartitionedDataset,
    landmarks: &LandmarkSet,
    spec: &KernelSpec,
    cfg: FedCgConfig,
    transport: TransportKind,
) -> Result<FedCgOutcome> {
    FedCgSession::start(data, landmarks, spec, cfg, transport)?.run()
}
