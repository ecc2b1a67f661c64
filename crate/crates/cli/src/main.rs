use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fedkrls::Sampler;
use fedkrls_cli::experiment::{prepare, run_on};
use fedkrls_cli::output::{echo, metrics_table, write_experiment, write_leakage};
use fedkrls_cli::{run_attack, run_sweep, Protocol, RunConfig, SeedRegime};

#[derive(Parser)]
#[command(name = "fedkrls", version, about = "Federated random Nystrom kernel least squares experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured protocol and write metrics, residual traces and a transcript.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed regime.
        #[arg(long, value_enum)]
        seed_regime: Option<SeedRegime>,
        #[arg(long)]
        parallel_repeats: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy against the number of landmarks, plus a full-kernel baseline.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance-matrix completion attack on leaked kernel blocks.
    Attack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on the generated toy dataset.
    Toy {
        /// Training samples.
        #[arg(long, default_value_t = 6000)]
        n: usize,
        #[arg(long, default_value_t = 6000)]
        n_test: usize,
        #[arg(long, default_value_t = 3)]
        hospitals: usize,
        #[arg(long, default_value_t = 50)]
        m: usize,
        #[arg(long, default_value = "P")]
        sampler: Sampler,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(config: &PathBuf, out: Option<PathBuf>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn experiment(cfg: &RunConfig) -> anyhow::Result<()> {
    let splits = prepare(cfg)?;
    let report = run_on(cfg, &splits)?;
    write_experiment(cfg, Some(&splits), &report)?;
    print!("{}", metrics_table(&report.rows));
    eprintln!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed_regime, parallel_repeats, out } => {
            let mut cfg = load(&config, out)?;
            if let Some(r) = seed_regime {
                cfg.seed_regime = r;
            }
            cfg.parallel_repeats |= parallel_repeats;
            experiment(&cfg)
        }
        Command::Sweep { config, out } => {
            let cfg = load(&config, out)?;
            let report = run_sweep(&cfg)?;
            write_experiment(&cfg, None, &report)?;
            print!("{}", metrics_table(&report.rows));
            Ok(())
        }
        Command::Attack { config, out } => {
            let cfg = load(&config, out)?;
            let cells = run_attack(&cfg)?;
            let path = write_leakage(&cfg.output_dir, &echo(&cfg, None), &cells)?;
            eprintln!("wrote {} cells to {}", cells.len(), path.display());
            Ok(())
        }
        Command::Toy { n, n_test, hospitals, m, sampler, repeats, seed, out } => {
            let mut cfg = RunConfig::new("toy");
            cfg.toy_n_train = n;
            cfg.toy_n_test = n_test;
            cfg.n_hospitals = hospitals;
            cfg.m = m;
            cfg.sampler = sampler;
            cfg.repeats = repeats;
            cfg.seed = seed;
            cfg.output_dir = out;
            cfg.protocols = vec![Protocol::Fedcg, Protocol::Cencg];
            cfg.validate().context("invalid toy settings")?;
            experiment(&cfg)
        }
    }
}
