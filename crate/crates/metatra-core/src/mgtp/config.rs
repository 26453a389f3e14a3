//! Trainer configuration: meta-learning rates, loop sizes, toggles.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Which trainer components are active. All off is plain pooled-source ERM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Toggles {
    /// Meta-learning: split sources into meta-train and pseudo-target tasks.
    pub ml: bool,
    /// Serial inner loop (J steps) across C parallel paths with an averaging merge.
    pub spt: bool,
    /// Latent mixup on the meta-test batch (requires `ml`).
    pub mm: bool,
}

impl Toggles {
    pub fn validate(&self) -> Result<()> {
        if self.mm && !self.ml {
            return Err(CoreError::Config(
                "MetaMix runs inside the meta-test phase and requires ML".into(),
            ));
        }
        if self.spt && !self.ml {
            return Err(CoreError::Config(
                "serial/parallel training wraps the meta step and requires ML".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer settings for the ERM baseline loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(flatten)]
    pub kind: OptimizerKind,
    /// Learning rate; `None` inherits the serial rate lambda.
    #[serde(default)]
    pub lr: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { kind: OptimizerKind::Sgd, lr: None }
    }
}

fn default_lambda() -> f64 {
    0.0015
}
fn default_kappa() -> f64 {
    0.001
}
fn default_loops() -> usize {
    4
}
fn default_epochs() -> usize {
    500
}
fn default_budget() -> usize {
    512
}
fn default_clip() -> Option<f64> {
    Some(5.0)
}

/// Meta-trainer configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    /// Serial inner learning rate (lambda).
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Parallel outer merge rate (kappa).
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Optional per-phase overrides of lambda.
    #[serde(default)]
    pub lambda_s: Option<f64>,
    #[serde(default)]
    pub lambda_t: Option<f64>,
    /// Serial tasks per path (J).
    #[serde(default = "default_loops")]
    pub serial_tasks: usize,
    /// Parallel optimization paths (C).
    #[serde(default = "default_loops")]
    pub parallel_paths: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Meta rounds per epoch; `None` matches the pooled batch count of ERM.
    #[serde(default)]
    pub rounds_per_epoch: Option<usize>,
    #[serde(default)]
    pub toggles: Toggles,
    /// Back-propagate the meta-test gradient through the inner update.
    #[serde(default)]
    pub second_order: bool,
    #[serde(default = "default_budget")]
    pub batch_agent_budget: usize,
    /// Global-norm gradient clip applied before every parameter update.
    #[serde(default = "default_clip")]
    pub clip_norm: Option<f64>,
    /// Optimizer of the ERM loop (used when `ml` is off, and by baselines).
    #[serde(default)]
    pub erm_optimizer: OptimizerConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            lambda: default_lambda(),
            kappa: default_kappa(),
            lambda_s: None,
            lambda_t: None,
            serial_tasks: default_loops(),
            parallel_paths: default_loops(),
            epochs: default_epochs(),
            rounds_per_epoch: None,
            toggles: Toggles::default(),
            second_order: false,
            batch_agent_budget: default_budget(),
            clip_norm: default_clip(),
            erm_optimizer: OptimizerConfig::default(),
        }
    }
}

impl MetaConfig {
    pub fn lambda_s(&self) -> f64 {
        self.lambda_s.unwrap_or(self.lambda)
    }

    pub fn lambda_t(&self) -> f64 {
        self.lambda_t.unwrap_or(self.lambda)
    }

    pub fn erm_lr(&self) -> f64 {
        self.erm_optimizer.lr.unwrap_or(self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        self.toggles.validate()?;
        if !(self.lambda > 0.0) || !(self.kappa > 0.0) {
            return Err(CoreError::Config(format!(
                "learning rates must be positive (lambda={}, kappa={})",
                self.lambda, self.kappa
            )));
        }
        if self.serial_tasks == 0 || self.parallel_paths == 0 {
            return Err(CoreError::Config("J and C must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(CoreError::Config("epochs must be >= 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(CoreError::Config("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_match_reported_settings() {
        let cfg = MetaConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.lambda, 0.0015);
        assert_eq!(cfg.kappa, 0.001);
        assert_eq!(cfg.serial_tasks, 4);
        assert_eq!(cfg.parallel_paths, 4);
        assert_eq!(cfg.epochs, 500);
        assert_eq!(cfg.batch_agent_budget, 512);
    }

    #[test]
    fn mm_requires_ml() {
        let cfg = MetaConfig {
            toggles: Toggles { ml: false, spt: false, mm: true },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rate_overrides_fall_back_to_lambda() {
        let mut cfg = MetaConfig::default();
        assert_eq!(cfg.lambda_s(), cfg.lambda);
        cfg.lambda_t = Some(0.5);
        assert_eq!(cfg.lambda_t(), 0.5);
    }
}
