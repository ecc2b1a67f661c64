//! Landmark sampling and the synchronized randomness shared by all parties.
//!
//! Every random quantity in a run is drawn from a ChaCha20 stream keyed by
//! SHA-256 over a fixed prefix, the 64-bit seed (little-endian) and a stream
//! label. Parties that share the seed therefore regenerate identical values
//! on any platform, and distinct labels give independent streams.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Matrix, Result};

/// Identifier of the stream construction, echoed into run configs.
pub const PRNG_ALGORITHM: &str = "chacha20/sha256-stream-v1";

const KEY_PREFIX: &[u8] = b"fedkrls/stream/v1\0";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SharedSeed {
    pub seed: u64,
    pub stream_label: String,
}

impl SharedSeed {
    pub fn new(seed: u64, stream_label: impl Into<String>) -> Self {
        Self { seed, stream_label: stream_label.into() }
    }

    /// Same seed, different purpose.
    pub fn with_label(&self, stream_label: impl Into<String>) -> Self {
        Self::new(self.seed, stream_label)
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(KEY_PREFIX);
        h.update(self.seed.to_le_bytes());
        h.update(self.stream_label.as_bytes());
        let mut key = [0u8; 32];
        key.copy_from_slice(h.finalize().as_slice());
        ChaCha20Rng::from_seed(key)
    }

    /// A 64-bit seed drawn from this stream, for deriving per-run seeds.
    pub fn derive(&self) -> u64 {
        self.rng().random()
    }

    /// Short fingerprint of the seed used in the handshake. It does not depend
    /// on the stream label.
    pub fn checksum(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(KEY_PREFIX);
        h.update(b"checksum");
        h.update(self.seed.to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest.as_slice()[..8].try_into().expect("8 bytes"))
    }
}

/// Landmark sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sampler {
    /// Training rows without replacement. Reveals raw samples, so it is only
    /// meant as a centralized benchmark.
    P,
    /// Uniform on the unit cube.
    U,
    /// Per-feature normal with the training mean and standard deviation.
    N,
}

impl std::fmt::Display for Sampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sampler::P => "P",
            Sampler::U => "U",
            Sampler::N => "N",
        })
    }
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P" | "p" => Ok(Sampler::P),
            "U" | "u" => Ok(Sampler::U),
            "N" | "n" => Ok(Sampler::N),
            _ => Err(Error::InvalidSpec(format!("unknown sampler {s:?}, expected P, U or N"))),
        }
    }
}

/// What each sampler needs to know about the data.
#[derive(Debug, Clone)]
pub enum SamplerStats<'a> {
    Train(&'a Matrix),
    Dim(usize),
    Moments { mean: Vec<f64>, std: Vec<f64> },
}

impl SamplerStats<'_> {
    /// Population mean and standard deviation of every column.
    pub fn moments_of(x: &Matrix) -> SamplerStats<'static> {
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
        let std = x
            .column_iter()
            .zip(&mean)
            .map(|(c, mu)| (c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        SamplerStats::Moments { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    /// `m x d`.
    pub w: Matrix,
    pub sampler: Sampler,
    pub m: usize,
    pub seed: SharedSeed,
}

impl LandmarkSet {
    /// Landmark coordinates restricted to a feature subset.
    pub fn features(&self, cols: &[usize]) -> Matrix {
        self.w.select_columns(cols)
    }
}

pub fn sample_landmarks(sampler: Sampler, m: usize, stats: &SamplerStats<'_>, seed: &SharedSeed) -> Result<LandmarkSet> {
    if m == 0 {
        return Err(Error::InvalidSpec("at least one landmark is required".into()));
    }
    let mut rng = seed.rng();
    let w = match (sampler, stats) {
        (Sampler::P, SamplerStats::Train(x)) => {
            if m > x.nrows() {
                return Err(Error::InvalidSpec(format!("{m} landmarks from {} training rows", x.nrows())));
            }
            let picked = rand::seq::index::sample(&mut rng, x.nrows(), m);
            let rows: Vec<usize> = picked.into_iter().collect();
            x.select_rows(&rows)
        }
        (Sampler::U, SamplerStats::Dim(d)) => {
            let mut w = Matrix::zeros(m, *d);
            for i in 0..m {
                for k in 0..*d {
                    w[(i, k)] = rng.random::<f64>();
                }
            }
            w
        }
        (Sampler::N, SamplerStats::Moments { mean, std }) => {
            if mean.len() != std.len() {
                return Err(Error::DimensionMismatch("mean and std lengths differ".into()));
            }
            if let Some(s) = std.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
                return Err(Error::InvalidSpec(format!("standard deviation must be finite and nonnegative, got {s}")));
            }
            if mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("sampler mean"));
            }
            let mut w = Matrix::zeros(m, mean.len());
            for i in 0..m {
                for k in 0..mean.len() {
                    let z: f64 = rng.sample(StandardNormal);
                    w[(i, k)] = mean[k] + std[k] * z;
                }
            }
            w
        }
        (s, _) => return Err(Error::InvalidSpec(format!("sampler {s} given the wrong statistics"))),
    };
    Ok(LandmarkSet { w, sampler, m, seed: seed.clone() })
}

/// I.i.d. standard normal values.
pub fn noise_stream(seed: &SharedSeed, len: usize) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// I.i.d. uniform values in [0, 1).
pub fn uniform_stream(seed: &SharedSeed, len: usize) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..len).map(|_| rng.random::<f64>()).collect()
}

/// Uniformly random permutation of `0..len`; `perm[i]` is the source index
/// placed at position `i`.
pub fn shared_permutation(seed: &SharedSeed, len: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut seed.rng());
    perm
}
