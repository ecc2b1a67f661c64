//! Leakage grid for the naive protocol's kernel blocks.

use fedkrls::attacks::{leakage_report, GammaSetting, LeakageCell, LeakageConfig};

use crate::config::RunConfig;
use crate::experiment::prepare;

pub fn leakage_config(cfg: &RunConfig, d: usize) -> LeakageConfig {
    let gamma = cfg.gamma.unwrap_or(1.0 / d as f64);
    LeakageConfig {
        sampler: cfg.sampler,
        m_grid: cfg.attack_m_grid.clone(),
        algorithms: cfg.attack_algorithms.clone(),
        seeds: cfg.attack_seeds.clone(),
        n_attack: cfg.n_attack,
        gamma: match cfg.random_gamma {
            Some([lo, hi]) => GammaSetting::Random { gamma, lo, hi },
            None => GammaSetting::Shared(gamma),
        },
        tol: cfg.attack_tol,
    }
}

/// Attacks the normalized training split of the configured dataset.
pub fn run_attack(cfg: &RunConfig) -> anyhow::Result<Vec<LeakageCell>> {
    cfg.validate()?;
    let splits = prepare(cfg)?;
    Ok(leakage_report(&cfg.dataset, &splits.train.x, &leakage_config(cfg, splits.train.d()))?)
}
