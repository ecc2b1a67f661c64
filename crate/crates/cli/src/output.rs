//! CSV artifacts and the console table. Every CSV starts with the run
//! configuration as `#` comment lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use fedkrls::attacks::{LeakageCell, LeakageOutcome};

use crate::config::RunConfig;
use crate::experiment::{ExperimentReport, MetricsRow, RunRecord, Splits};

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

/// Config echo, plus the fitted normalization when known.
pub fn echo(cfg: &RunConfig, splits: Option<&Splits>) -> String {
    let mut out: String = cfg.to_toml().lines().map(|l| format!("# {l}\n")).collect();
    out.push_str(&format!("# prng = {:?}\n", fedkrls::landmarks::PRNG_ALGORITHM));
    if let Some(n) = splits.and_then(|s| s.train.normalization.as_ref()) {
        out.push_str(&format!("# normalization.min = {:?}\n# normalization.max = {:?}\n", n.min, n.max));
    }
    out
}

fn csv_with_echo(dir: &Path, name: &str, echo: &str) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let mut f = create(dir, name)?;
    f.write_all(echo.as_bytes())?;
    Ok(csv::Writer::from_writer(f))
}

pub const METRICS_HEADER: [&str; 16] = [
    "dataset",
    "protocol",
    "sampler",
    "m",
    "repeats",
    "converged",
    "stop_epoch_mean",
    "stop_epoch_2std",
    "accuracy_mean",
    "accuracy_2std",
    "recall_mean",
    "recall_2std",
    "precision_mean",
    "precision_2std",
    "train_time_s_mean",
    "train_time_s_2std",
];

fn metrics_record(r: &MetricsRow) -> Vec<String> {
    let f = |v: f64| format!("{v:.6}");
    vec![
        r.dataset.clone(),
        r.protocol.clone(),
        r.sampler.map_or_else(|| "-".into(), |s| s.to_string()),
        r.m.to_string(),
        r.repeats.to_string(),
        r.converged.to_string(),
        f(r.stop_epoch.mean),
        f(r.stop_epoch.two_std),
        f(r.accuracy.mean),
        f(r.accuracy.two_std),
        f(r.recall.mean),
        f(r.recall.two_std),
        f(r.precision.mean),
        f(r.precision.two_std),
        f(r.train_time_s.mean),
        f(r.train_time_s.two_std),
    ]
}

pub fn write_metrics(dir: &Path, echo: &str, rows: &[MetricsRow]) -> anyhow::Result<PathBuf> {
    let mut w = csv_with_echo(dir, "metrics.csv", echo)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record(metrics_record(r))?;
    }
    w.flush()?;
    Ok(dir.join("metrics.csv"))
}

pub fn residual_file_name(dataset: &str, run: &RunRecord) -> String {
    format!("residuals_{dataset}_{}_r{}.csv", run.protocol.as_str(), run.repeat)
}

pub fn write_residuals(dir: &Path, echo: &str, dataset: &str, run: &RunRecord) -> anyhow::Result<PathBuf> {
    let name = residual_file_name(dataset, run);
    let mut w = csv_with_echo(dir, &name, echo)?;
    w.write_record(["epoch", "residual_sq_sum", "step", "beta"])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:e}"));
    for rec in &run.trace.records {
        w.write_record([rec.epoch.to_string(), format!("{:e}", rec.residual_sq_sum), opt(rec.step), opt(rec.beta)])?;
    }
    w.flush()?;
    Ok(dir.join(name))
}

pub fn write_transcript(dir: &Path, run: &RunRecord) -> anyhow::Result<PathBuf> {
    let mut f = create(dir, "transcript.log")?;
    run.transcript.write_log(&mut f)?;
    f.flush()?;
    Ok(dir.join("transcript.log"))
}

/// Metrics, one residual trace per run, and the transcript of the first run.
pub fn write_experiment(cfg: &RunConfig, splits: Option<&Splits>, report: &ExperimentReport) -> anyhow::Result<()> {
    let dir = &cfg.output_dir;
    let echo = echo(cfg, splits);
    write_metrics(dir, &echo, &report.rows)?;
    for run in &report.runs {
        write_residuals(dir, &echo, &cfg.dataset, run)?;
    }
    if let Some(first) = report.runs.first() {
        write_transcript(dir, first)?;
    }
    Ok(())
}

pub fn write_leakage(dir: &Path, echo: &str, cells: &[LeakageCell]) -> anyhow::Result<PathBuf> {
    let mut w = csv_with_echo(dir, "leakage.csv", echo)?;
    w.write_record(["dataset", "sampler", "m", "algorithm", "seed", "rel_error", "iterations", "wall_time_s"])?;
    for c in cells {
        let (err, iters, time) = match c.outcome {
            LeakageOutcome::Completed { rel_error, iterations, wall_time } => {
                (format!("{rel_error:.9e}"), iterations.to_string(), format!("{:.6}", wall_time.as_secs_f64()))
            }
            LeakageOutcome::NotInvertible => ("not_invertible".into(), String::new(), String::new()),
        };
        w.write_record([c.dataset.clone(), c.sampler.to_string(), c.m.to_string(), c.algorithm.to_string(), c.seed.to_string(), err, iters, time])?;
    }
    w.flush()?;
    Ok(dir.join("leakage.csv"))
}

/// Aligned text table of metrics rows.
pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let header = ["dataset", "protocol", "sampler", "m", "stop epoch", "accuracy", "recall", "precision", "train time (s)"];
    let body: Vec<[String; 9]> = rows
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                r.protocol.clone(),
                r.sampler.map_or_else(|| "-".into(), |s| s.to_string()),
                r.m.to_string(),
                format!("{:.2} ± {:.2}", r.stop_epoch.mean, r.stop_epoch.two_std),
                r.accuracy.to_string(),
                r.recall.to_string(),
                r.precision.to_string(),
                r.train_time_s.to_string(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_owned() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in &body {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}
