//! Grid of completion attacks over landmark counts, algorithms and seeds.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alternating_descent::alternating_descent;
use super::edm::{assemble_edm, CompletionResult, EdmInstance};
use super::rank_alternation::rank_alternation;
use super::soft_impute::soft_impute;
use crate::kernel::{neg_log_to_distances, rbf_block, KernelSpec};
use crate::landmarks::{sample_landmarks, shared_permutation, Sampler, SamplerStats, SharedSeed};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    RankAlternation,
    AlternatingDescent,
    SoftImpute,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::RankAlternation, Algorithm::AlternatingDescent, Algorithm::SoftImpute];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::RankAlternation => "rank_alternation",
            Algorithm::AlternatingDescent => "alternating_descent",
            Algorithm::SoftImpute => "soft_impute",
        }
    }

    /// Runs with the default caps: 500 iterations, 50 sweeps for descent,
    /// zero final penalty for soft-impute.
    pub fn run(self, inst: &EdmInstance, tol: f64) -> CompletionResult {
        match self {
            Algorithm::RankAlternation => rank_alternation(inst, 500, tol),
            Algorithm::AlternatingDescent => alternating_descent(inst, 50, tol),
            Algorithm::SoftImpute => soft_impute(inst, 0.0, 500, tol),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank_alternation" | "ra" => Ok(Algorithm::RankAlternation),
            "alternating_descent" | "ad" => Ok(Algorithm::AlternatingDescent),
            "soft_impute" | "si" => Ok(Algorithm::SoftImpute),
            _ => Err(Error::InvalidSpec(format!("unknown attack algorithm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LeakageOutcome {
    Completed { rel_error: f64, iterations: usize, wall_time: Duration },
    NotInvertible,
}

impl LeakageOutcome {
    pub fn rel_error(&self) -> Option<f64> {
        match self {
            LeakageOutcome::Completed { rel_error, .. } => Some(*rel_error),
            LeakageOutcome::NotInvertible => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageCell {
    pub dataset: String,
    pub sampler: Sampler,
    pub m: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub outcome: LeakageOutcome,
}

/// How the attacked hospital's kernel was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GammaSetting {
    Shared(f64),
    /// Widths drawn per landmark from `[lo * gamma, hi * gamma]`.
    Random { gamma: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageConfig {
    pub sampler: Sampler,
    pub m_grid: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Rows attacked per seed; the hidden block is `n_attack x n_attack`.
    pub n_attack: usize,
    pub gamma: GammaSetting,
    pub tol: f64,
}

/// Attacks `x` (normalized training features) once per cell of
/// `seeds x m_grid x algorithms`, ordered that way. Each seed draws its own
/// subsample and landmarks. The adversary sees the kernel between the
/// subsample and the landmarks, knows the landmarks and the dimension, and
/// inverts the kernel to distances when the widths allow it.
pub fn leakage_report(dataset: &str, x: &Matrix, cfg: &LeakageConfig) -> Result<Vec<LeakageCell>> {
    if cfg.n_attack < 2 || cfg.n_attack > x.nrows() {
        return Err(Error::InvalidSpec(format!("n_attack {} for {} rows", cfg.n_attack, x.nrows())));
    }
    let jobs: Vec<(u64, usize)> = cfg.seeds.iter().flat_map(|&s| cfg.m_grid.iter().map(move |&m| (s, m))).collect();
    let cells = jobs
        .par_iter()
        .map(|&(seed, m)| attack_cell(dataset, x, cfg, seed, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(cells.into_iter().flatten().collect())
}

fn attack_cell(dataset: &str, x: &Matrix, cfg: &LeakageConfig, seed: u64, m: usize) -> Result<Vec<LeakageCell>> {
    let cell = |algorithm, outcome| LeakageCell { dataset: dataset.to_owned(), sampler: cfg.sampler, m, algorithm, seed, outcome };
    let perm = shared_permutation(&SharedSeed::new(seed, format!("attack-subsample/s{seed}")), x.nrows());
    let xs = x.select_rows(&perm[..cfg.n_attack]);
    if m == 0 {
        let none = LeakageOutcome::Completed { rel_error: 1.0, iterations: 0, wall_time: Duration::ZERO };
        return Ok(cfg.algorithms.iter().map(|&a| cell(a, none)).collect());
    }
    let stats = match cfg.sampler {
        Sampler::P => SamplerStats::Train(x),
        Sampler::U => SamplerStats::Dim(x.ncols()),
        Sampler::N => SamplerStats::moments_of(x),
    };
    let landmarks = sample_landmarks(cfg.sampler, m, &stats, &SharedSeed::new(seed, "landmarks"))?;
    let spec = match cfg.gamma {
        GammaSetting::Shared(g) => KernelSpec::shared(g),
        GammaSetting::Random { gamma, lo, hi } => KernelSpec::random_per_landmark(gamma, m, lo, hi, seed)?,
    };
    let block = rbf_block(&xs, &landmarks.w, &spec)?;
    match neg_log_to_distances(&block, &spec) {
        Err(Error::NotInvertible(_)) => {
            return Ok(cfg.algorithms.iter().map(|&a| cell(a, LeakageOutcome::NotInvertible)).collect());
        }
        Err(e) => return Err(e),
        Ok(_) => {}
    }
    // Inversion succeeded; the adversary is granted the exact distances.
    let inst = assemble_edm(&xs, &landmarks.w)?;
    Ok(cfg
        .algorithms
        .iter()
        .map(|&a| {
            let r = a.run(&inst, cfg.tol);
            cell(a, LeakageOutcome::Completed { rel_error: r.rel_error, iterations: r.iterations, wall_time: r.wall_time })
        })
        .collect())
}
