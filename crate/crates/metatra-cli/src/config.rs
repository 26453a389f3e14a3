//! Experiment configuration: one TOML document per experiment, with CLI
//! flags overriding individual fields.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use metatra_core::cvae_head::LossWeights;
use metatra_core::data::{ColumnOrder, SynthDomainSpec};
use metatra_core::dual_tt::ModelConfig;
use metatra_core::mgtp::MetaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// A canonical dataset directory produced by `ingest` or `synth`.
    Dir,
    /// Synthetic domains generated in memory from `synth_domains`.
    Synth,
}

fn default_frame_dt() -> f64 {
    0.4
}
fn default_t_obs() -> usize {
    8
}
fn default_t_pre() -> usize {
    20
}
fn default_stride() -> usize {
    1
}
fn default_n_scenes() -> usize {
    8
}
fn default_frames_per_scene() -> usize {
    40
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSection {
    pub source: DataSource,
    /// Dataset directory (`source = "dir"`).
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_frame_dt")]
    pub frame_dt: f64,
    #[serde(default = "default_t_obs")]
    pub t_obs: usize,
    #[serde(default = "default_t_pre")]
    pub t_pre: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub column_order: ColumnOrder,
    /// Synthetic generation (`source = "synth"`).
    #[serde(default)]
    pub synth_domains: Vec<SynthDomainSpec>,
    #[serde(default = "default_n_scenes")]
    pub n_scenes: usize,
    #[serde(default = "default_frames_per_scene")]
    pub frames_per_scene: usize,
    /// Seed of the synthetic generator; defaults to the training seed.
    #[serde(default)]
    pub synth_seed: Option<u64>,
}

fn default_zeta() -> f64 {
    1.0
}
fn default_eta() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    pub seed: u64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(flatten)]
    pub meta: MetaConfig,
}

fn default_k() -> usize {
    20
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalSection {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub held_out: Option<String>,
    /// Evaluation seed; defaults to the training seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelConfig,
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.meta.validate()?;
        if self.train.zeta < 0.0 || self.train.eta < 0.0 {
            bail!("loss weights zeta and eta must be non-negative");
        }
        match self.dataset.source {
            DataSource::Dir => {
                if self.dataset.dir.is_none() {
                    bail!("dataset.source = \"dir\" requires dataset.dir");
                }
            }
            DataSource::Synth => {
                if self.dataset.synth_domains.is_empty() {
                    bail!("dataset.source = \"synth\" requires at least one [[dataset.synth_domains]]");
                }
                for spec in &self.dataset.synth_domains {
                    spec.validate()?;
                }
            }
        }
        if !(self.dataset.t_obs > 0 && self.dataset.t_obs < self.dataset.t_pre) {
            bail!(
                "need 0 < t_obs < t_pre, got {} and {}",
                self.dataset.t_obs,
                self.dataset.t_pre
            );
        }
        if self.eval.k == 0 {
            bail!("eval.k must be >= 1");
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { zeta: self.train.zeta, eta: self.train.eta }
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval.seed.unwrap_or(self.train.seed)
    }

    pub fn synth_seed(&self) -> u64 {
        self.dataset.synth_seed.unwrap_or(self.train.seed)
    }

    pub fn echo_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing config echo")
    }
}
