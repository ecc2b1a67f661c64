//! Repeated training runs and their aggregate metrics.

use std::time::Duration;

use anyhow::{bail, Context};
use fedkrls::federation::{naive_protocol, run_fedcg, NaiveConfig};
use fedkrls::solver::{solve_krls_cg, CgTrace};
use fedkrls::{
    load_csv, make_toy, noise_stream, normalize_train_test, partition, predict, rbf_block, sample_landmarks,
    stratified_split, Confusion, Dataset, FedCgConfig, KernelSpec, LandmarkSet, MeanSpread, Sampler, SamplerStats,
    SharedSeed, Topology, Transcript,
};
use rayon::prelude::*;

use crate::config::{Protocol, RunConfig, SeedRegime};

/// Normalized train and test splits.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn prepare(cfg: &RunConfig) -> anyhow::Result<Splits> {
    if cfg.is_toy() {
        let (train, test, _) = make_toy(cfg.toy_n_train, cfg.toy_n_test, cfg.n_hospitals, cfg.seed)?;
        return Ok(Splits { train, test });
    }
    let path = cfg.dataset_path();
    let ds = load_csv(&path, &cfg.label_column, cfg.positive().as_deref())
        .with_context(|| format!("loading {}", path.display()))?;
    let (train, test) = stratified_split(&ds, cfg.train_frac, &SharedSeed::new(cfg.seed, "split"))?;
    let (train, test) = normalize_train_test(&train, &test)?;
    Ok(Splits { train, test })
}

pub fn topology(cfg: &RunConfig, train: &Dataset, protocol: Protocol) -> anyhow::Result<Topology> {
    let n_h = if protocol == Protocol::Cencg { 1 } else { cfg.n_hospitals };
    let d = train.d();
    Ok(if cfg.is_toy() {
        Topology::with_providers(&train.ids, d, n_h, vec![vec![0], (1..d).collect()])?
    } else {
        Topology::uniform(&train.ids, d, n_h, cfg.n_providers.clamp(1, d))?
    })
}

pub fn kernel_spec(cfg: &RunConfig, d: usize, m: usize, seed: u64) -> anyhow::Result<KernelSpec> {
    let gamma = cfg.gamma.unwrap_or(1.0 / d as f64);
    Ok(match cfg.random_gamma {
        Some([lo, hi]) => KernelSpec::random_per_landmark(gamma, m, lo, hi, seed)?,
        None => KernelSpec::shared(gamma),
    })
}

pub fn landmarks_for(cfg: &RunConfig, train: &Dataset, repeat: usize) -> anyhow::Result<LandmarkSet> {
    let stats = match cfg.sampler {
        Sampler::P => SamplerStats::Train(&train.x),
        Sampler::U => SamplerStats::Dim(train.d()),
        Sampler::N => SamplerStats::moments_of(&train.x),
    };
    let label = match cfg.seed_regime {
        SeedRegime::Alpha => "landmarks".to_owned(),
        SeedRegime::Landmarks => format!("landmarks/r{repeat}"),
    };
    Ok(sample_landmarks(cfg.sampler, cfg.m, &stats, &SharedSeed::new(cfg.seed, label))?)
}

pub fn alpha0_for(cfg: &RunConfig, repeat: usize) -> Vec<f64> {
    match cfg.seed_regime {
        SeedRegime::Alpha => noise_stream(&SharedSeed::new(cfg.seed, format!("alpha0/r{repeat}")), cfg.m),
        SeedRegime::Landmarks => vec![0.0; cfg.m],
    }
}

/// One training run and its test metrics.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub protocol: Protocol,
    pub repeat: usize,
    pub alpha: Vec<f64>,
    pub trace: CgTrace,
    pub train_time: Duration,
    pub confusion: Confusion,
    pub transcript: Transcript,
}

pub fn run_once(cfg: &RunConfig, splits: &Splits, protocol: Protocol, repeat: usize) -> anyhow::Result<RunRecord> {
    let Splits { train, test } = splits;
    let landmarks = landmarks_for(cfg, train, repeat)?;
    let spec = kernel_spec(cfg, train.d(), cfg.m, cfg.seed)?;
    let alpha0 = alpha0_for(cfg, repeat);
    let run_seed = SharedSeed::new(cfg.seed, format!("run/r{repeat}")).derive();
    let data = partition(train, &topology(cfg, train, protocol)?)?;
    let (alpha, trace, train_time, transcript) = match protocol {
        Protocol::Fedcg | Protocol::Cencg => {
            let fed = FedCgConfig {
                lambda: cfg.lambda,
                toll: cfg.toll,
                max_epochs: cfg.max_epochs,
                seed: run_seed,
                alpha0,
                masking: !cfg.masking_off,
                hospital_seeds: Default::default(),
            };
            let out = run_fedcg(&data, &landmarks, &spec, fed, cfg.transport)?;
            (out.alpha, out.trace, out.train_time, out.transcript)
        }
        Protocol::Naive => {
            let naive = NaiveConfig { lambda: cfg.lambda, toll: cfg.toll, max_epochs: cfg.max_epochs, seed: run_seed, alpha0 };
            let out = naive_protocol(&data, &landmarks, &spec, &naive, cfg.transport)?;
            (out.alpha, out.trace, out.train_time, out.transcript)
        }
    };
    let pred = predict(&alpha, &test.x, &landmarks, &spec)?;
    let confusion = Confusion::from_labels(&test.y, &pred.classes);
    Ok(RunRecord { protocol, repeat, alpha, trace, train_time, confusion, transcript })
}

/// Aggregate over repeats: mean and twice the population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub dataset: String,
    pub protocol: String,
    pub sampler: Option<Sampler>,
    pub m: usize,
    pub repeats: usize,
    pub converged: usize,
    pub stop_epoch: MeanSpread,
    pub train_time_s: MeanSpread,
    pub accuracy: MeanSpread,
    pub recall: MeanSpread,
    pub precision: MeanSpread,
}

impl MetricsRow {
    pub fn from_runs(dataset: &str, protocol: &str, sampler: Option<Sampler>, m: usize, runs: &[&RunRecord]) -> Self {
        let of = |f: &dyn Fn(&RunRecord) -> f64| MeanSpread::of(&runs.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            dataset: dataset.to_owned(),
            protocol: protocol.to_owned(),
            sampler,
            m,
            repeats: runs.len(),
            converged: runs.iter().filter(|r| r.trace.converged).count(),
            stop_epoch: of(&|r| r.trace.stop_epoch as f64),
            train_time_s: of(&|r| r.train_time.as_secs_f64()),
            accuracy: of(&|r| r.confusion.accuracy()),
            recall: of(&|r| r.confusion.recall()),
            precision: of(&|r| r.confusion.precision()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<MetricsRow>,
    pub runs: Vec<RunRecord>,
}

/// Runs every configured protocol `repeats` times on the same split.
pub fn run_experiment(cfg: &RunConfig) -> anyhow::Result<ExperimentReport> {
    cfg.validate()?;
    let splits = prepare(cfg)?;
    run_on(cfg, &splits)
}

pub fn run_on(cfg: &RunConfig, splits: &Splits) -> anyhow::Result<ExperimentReport> {
    let jobs: Vec<(Protocol, usize)> = cfg.protocols.iter().flat_map(|&p| (0..cfg.repeats).map(move |r| (p, r))).collect();
    let run = |&(p, r): &(Protocol, usize)| {
        run_once(cfg, splits, p, r).with_context(|| format!("{} repeat {r} failed; config:\n{}", p.as_str(), cfg.to_toml()))
    };
    let runs: Vec<RunRecord> = if cfg.parallel_repeats {
        jobs.par_iter().map(run).collect::<anyhow::Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<anyhow::Result<_>>()?
    };
    let rows = cfg
        .protocols
        .iter()
        .map(|p| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.protocol == *p).collect();
            MetricsRow::from_runs(&cfg.dataset, p.as_str(), Some(cfg.sampler), cfg.m, &mine)
        })
        .collect();
    Ok(ExperimentReport { rows, runs })
}

/// Full-kernel least squares solved by CG on `K + lambda I`, scored on the
/// test split.
pub fn krls_baseline(cfg: &RunConfig, splits: &Splits) -> anyhow::Result<MetricsRow> {
    let Splits { train, test } = splits;
    let spec = KernelSpec::shared(cfg.gamma.unwrap_or(1.0 / train.d() as f64));
    let k = rbf_block(&train.x, &train.x, &spec)?.values;
    let started = std::time::Instant::now();
    let (alpha, trace) = solve_krls_cg(&k, &train.y, cfg.lambda, cfg.toll, cfg.max_epochs)?;
    let train_time = started.elapsed();
    let scores = rbf_block(&test.x, &train.x, &spec)?.values * fedkrls::Vector::from_column_slice(&alpha);
    let classes: Vec<f64> = scores.iter().map(|&s| if s >= 0.0 { 1.0 } else { -1.0 }).collect();
    let record = RunRecord {
        protocol: Protocol::Cencg,
        repeat: 0,
        alpha,
        trace,
        train_time,
        confusion: Confusion::from_labels(&test.y, &classes),
        transcript: Transcript::default(),
    };
    Ok(MetricsRow::from_runs(&cfg.dataset, "krls_cg", None, train.n(), &[&record]))
}

/// One experiment per `(sampler, m)` cell, then the full-kernel baseline.
pub fn run_sweep(cfg: &RunConfig) -> anyhow::Result<ExperimentReport> {
    cfg.validate()?;
    let samplers = if cfg.samplers.is_empty() { vec![cfg.sampler] } else { cfg.samplers.clone() };
    let grid = if cfg.m_grid.is_empty() { vec![cfg.m] } else { cfg.m_grid.clone() };
    if grid.contains(&0) {
        bail!("landmark counts must be positive");
    }
    let splits = prepare(cfg)?;
    let mut report = ExperimentReport { rows: Vec::new(), runs: Vec::new() };
    for &sampler in &samplers {
        for &m in &grid {
            let cell = RunConfig { sampler, m, ..cfg.clone() };
            let r = run_on(&cell, &splits)?;
            report.rows.extend(r.rows);
            report.runs.extend(r.runs);
        }
    }
    if cfg.krls_baseline {
        report.rows.push(krls_baseline(cfg, &splits)?);
    }
    Ok(report)
}
