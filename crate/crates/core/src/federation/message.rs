use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exact::ExactSum;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageKind {
    /// Seed checksum handshake.
    LandmarkSeed,
    /// `K_h alpha - y_h + eta_h`, one entry per sample.
    MaskedResidual,
    /// `K_h^T eta_h`.
    NoisyGradTerm,
    /// `K_h^T (K_h alpha - y_h + eta_h)`.
    DenoiseTerm,
    /// `K_h^T K_h p + w_h lambda p`.
    PartialKtKp,
    /// `p^T` times the hospital's `PartialKtKp`.
    PartialScalar,
    /// Server to hospitals: the gradient at initialization, afterwards the
    /// aggregated `KtKp` followed by `pKtKp`.
    Broadcast,
    /// Naive protocol only: a provider's kernel block for one hospital.
    NaiveKernelBlock,
    /// Naive protocol only: permuted labels plus noise.
    MaskedLabels,
    /// Payload `[0]` ends a run normally, `[1]` aborts it.
    Stop,
}

impl MessageKind {
    pub const ALL: [MessageKind; 10] = [
        MessageKind::LandmarkSeed,
        MessageKind::MaskedResidual,
        MessageKind::NoisyGradTerm,
        MessageKind::DenoiseTerm,
        MessageKind::PartialKtKp,
        MessageKind::PartialScalar,
        MessageKind::Broadcast,
        MessageKind::NaiveKernelBlock,
        MessageKind::MaskedLabels,
        MessageKind::Stop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::LandmarkSeed => "LandmarkSeed",
            MessageKind::MaskedResidual => "MaskedResidual",
            MessageKind::NoisyGradTerm => "NoisyGradTerm",
            MessageKind::DenoiseTerm => "DenoiseTerm",
            MessageKind::PartialKtKp => "PartialKtKp",
            MessageKind::PartialScalar => "PartialScalar",
            MessageKind::Broadcast => "Broadcast",
            MessageKind::NaiveKernelBlock => "NaiveKernelBlock",
            MessageKind::MaskedLabels => "MaskedLabels",
            MessageKind::Stop => "Stop",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Protocol(format!("unknown message kind {s:?}")))
    }
}

impl std::fmt::Display for MessageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One message between parties. The payload is a row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub sender: u32,
    pub epoch: u64,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Fills ragged expansion rows. Negative zero adds nothing to a sum and is
/// bitwise distinct from the `+0.0` that normalized features produce.
pub const PAD: f64 = -0.0;

impl ProtocolMessage {
    pub fn new(kind: MessageKind, sender: u32, epoch: u64, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "payload shape does not match its length");
        Self { kind, sender, epoch, rows, cols, data }
    }

    pub fn vector(kind: MessageKind, sender: u32, epoch: u64, data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(kind, sender, epoch, 1, n, data)
    }

    pub fn stop(sender: u32, epoch: u64, abort: bool) -> Self {
        Self::vector(MessageKind::Stop, sender, epoch, vec![if abort { 1.0 } else { 0.0 }])
    }

    pub fn is_abort(&self) -> bool {
        self.kind == MessageKind::Stop && self.data.first() == Some(&1.0)
    }

    pub fn seed_checksum(sender: u32, checksum: u64) -> Self {
        let lo = (checksum & 0xffff_ffff) as f64;
        let hi = (checksum >> 32) as f64;
        Self::vector(MessageKind::LandmarkSeed, sender, 0, vec![lo, hi])
    }

    pub fn checksum(&self) -> Result<u64> {
        match self.data.as_slice() {
            [lo, hi] if lo.fract() == 0.0 && hi.fract() == 0.0 && *lo >= 0.0 && *hi >= 0.0 => {
                Ok(((*hi as u64) << 32) | (*lo as u64))
            }
            _ => Err(Error::Protocol("malformed seed checksum".into())),
        }
    }

    /// One row per accumulator, holding its non-overlapping expansion.
    pub fn from_expansions(kind: MessageKind, sender: u32, epoch: u64, accs: &[ExactSum]) -> Self {
        let exps: Vec<Vec<f64>> = accs.iter().map(ExactSum::to_expansion).collect();
        let cols = exps.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let mut data = Vec::with_capacity(accs.len() * cols);
        for e in &exps {
            data.extend_from_slice(e);
            data.extend(std::iter::repeat(PAD).take(cols - e.len()));
        }
        Self::new(kind, sender, epoch, accs.len(), cols, data)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// SHA-256 of the payload bytes (row-major, little-endian), hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks kind, sender, epoch and shape of an incoming message.
    pub fn expect(&self, kind: MessageKind, sender: u32, epoch: u64, rows: Option<usize>) -> Result<()> {
        if self.kind != kind || self.sender != sender || self.epoch != epoch {
            return Err(Error::Protocol(format!(
                "expected {kind} from {sender} at epoch {epoch}, got {} from {} at epoch {}",
                self.kind, self.sender, self.epoch
            )));
        }
        if let Some(r) = rows {
            if self.rows != r {
                return Err(Error::Protocol(format!("{kind} has {} rows, expected {r}", self.rows)));
            }
        }
        Ok(())
    }
}
