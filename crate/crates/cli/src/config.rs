//! Flat TOML run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fedkrls::attacks::Algorithm;
use fedkrls::{Sampler, TransportKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Fedcg,
    Cencg,
    Naive,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Fedcg => "fedcg",
            Protocol::Cencg => "cencg",
            Protocol::Naive => "naive",
        }
    }
}

/// Which quantity changes between repeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SeedRegime {
    /// Landmarks fixed, random starting coefficients per repeat.
    Alpha,
    /// Zero starting coefficients, fresh landmarks per repeat.
    Landmarks,
}

fn default_true() -> bool {
    true
}
fn default_label_column() -> String {
    "class".into()
}
fn default_sampler() -> Sampler {
    Sampler::P
}
fn default_m() -> usize {
    50
}
fn default_lambda() -> f64 {
    1e-3
}
fn default_toll() -> f64 {
    1e-6
}
fn default_max_epochs() -> usize {
    500
}
fn default_hospitals() -> usize {
    3
}
fn default_providers() -> usize {
    2
}
fn default_protocols() -> Vec<Protocol> {
    vec![Protocol::Fedcg, Protocol::Cencg]
}
fn default_repeats() -> usize {
    10
}
fn default_regime() -> SeedRegime {
    SeedRegime::Alpha
}
fn default_train_frac() -> f64 {
    0.7
}
fn default_toy_n() -> usize {
    6000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_attack_m_grid() -> Vec<usize> {
    vec![0, 5, 10, 20, 40]
}
fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}
fn default_attack_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_n_attack() -> usize {
    30
}
fn default_attack_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Fixture name (`iris`, `wine`, `breast_cancer`, `sonar`, `ionosphere`)
    /// or `toy` for the generated dataset.
    pub dataset: String,
    /// CSV file to load instead of `<data_dir>/<dataset>.csv`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Defaults to the class regrouping used for each fixture.
    #[serde(default)]
    pub positive_class: Option<String>,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_toy_n")]
    pub toy_n_train: usize,
    #[serde(default = "default_toy_n")]
    pub toy_n_test: usize,

    #[serde(default = "default_sampler")]
    pub sampler: Sampler,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Kernel width; `1 / d` when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Per-landmark widths drawn from `[lo * gamma, hi * gamma]`.
    #[serde(default)]
    pub random_gamma: Option<[f64; 2]>,
    #[serde(default = "default_toll")]
    pub toll: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,

    #[serde(default = "default_hospitals")]
    pub n_hospitals: usize,
    #[serde(default = "default_providers")]
    pub n_providers: usize,
    #[serde(default = "default_protocols")]
    pub protocols: Vec<Protocol>,
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default)]
    pub masking_off: bool,

    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_regime")]
    pub seed_regime: SeedRegime,
    #[serde(default)]
    pub parallel_repeats: bool,

    /// Sweep grid; falls back to `m` and `sampler`.
    #[serde(default)]
    pub m_grid: Vec<usize>,
    #[serde(default)]
    pub samplers: Vec<Sampler>,
    /// Adds a full-kernel CG row to sweeps.
    #[serde(default = "default_true")]
    pub krls_baseline: bool,

    #[serde(default = "default_attack_m_grid")]
    pub attack_m_grid: Vec<usize>,
    #[serde(default = "default_algorithms")]
    pub attack_algorithms: Vec<Algorithm>,
    #[serde(default = "default_attack_seeds")]
    pub attack_seeds: Vec<u64>,
    #[serde(default = "default_n_attack")]
    pub n_attack: usize,
    #[serde(default = "default_attack_tol")]
    pub attack_tol: f64,

    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Defaults for everything but the dataset.
    pub fn new(dataset: impl Into<String>) -> Self {
        toml::from_str(&format!("dataset = {:?}", dataset.into())).expect("defaults parse")
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.repeats == 0 {
            bail!("repeats must be at least 1");
        }
        if self.protocols.is_empty() {
            bail!("no protocols selected");
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            bail!("train_frac must lie in (0, 1), got {}", self.train_frac);
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                bail!("gamma must be positive, got {g}");
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn is_toy(&self) -> bool {
        self.dataset == "toy"
    }

    /// Config file setting, then `FEDKRLS_DATA_DIR`, then the repository's
    /// `data/` directory.
    pub fn resolved_data_dir(&self) -> PathBuf {
        if let Some(d) = &self.data_dir {
            return d.clone();
        }
        if let Some(d) = std::env::var_os("FEDKRLS_DATA_DIR") {
            return PathBuf::from(d);
        }
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.path.clone().unwrap_or_else(|| self.resolved_data_dir().join(format!("{}.csv", self.dataset)))
    }

    pub fn positive(&self) -> Option<String> {
        self.positive_class.clone().or_else(|| default_positive(&self.dataset).map(str::to_owned))
    }
}

/// Positive class for each bundled fixture.
pub fn default_positive(dataset: &str) -> Option<&'static str> {
    Some(match dataset {
        "iris" => "setosa",
        "wine" => "class_0",
        "breast_cancer" => "malignant",
        "sonar" => "mine",
        "ionosphere" => "good",
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = RunConfig::new("iris");
        assert_eq!(cfg.m, 50);
        assert_eq!(cfg.sampler, Sampler::P);
        assert_eq!(cfg.protocols, vec![Protocol::Fedcg, Protocol::Cencg]);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("dataset = \"iris\"\nlandmarks = 5\n").is_err());
        assert!(RunConfig::from_toml("dataset = \"iris\"\nrepeats = 0\n").is_err());
    }

    #[test]
    fn parses_enums() {
        let cfg = RunConfig::from_toml(
            "dataset = \"wine\"\nsampler = \"U\"\nprotocols = [\"naive\"]\nseed_regime = \"landmarks\"\ntransport = \"tcp\"\nattack_algorithms = [\"soft_impute\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.sampler, Sampler::U);
        assert_eq!(cfg.protocols, vec![Protocol::Naive]);
        assert_eq!(cfg.seed_regime, SeedRegime::Landmarks);
        assert_eq!(cfg.transport, TransportKind::Tcp);
        assert_eq!(cfg.attack_algorithms, vec![Algorithm::SoftImpute]);
    }
}
