//! Running aggregate of the source-domain posterior, feeding latent mixup.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

/// Exponential moving average of batch-mean posterior (mu, sigma) over
/// meta-train batches. Reset per run, persisted in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePriorAggregate {
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
    pub initialized: bool,
    pub decay: f64,
}

impl SourcePriorAggregate {
    pub fn new(d_latent: usize) -> Self {
        SourcePriorAggregate {
            mu: Array1::zeros(d_latent),
            sigma: Array1::ones(d_latent),
            initialized: false,
            decay: 0.9,
        }
    }

    /// Fold in one batch's mean posterior statistics. The first update seeds
    /// the average directly.
    pub fn update(&mut self, mu_mean: &Array1<f64>, sigma_mean: &Array1<f64>) {
        if !self.initialized {
            self.mu.assign(mu_mean);
            self.sigma.assign(sigma_mean);
            self.initialized = true;
        } else {
            let d = self.decay;
            self.mu.zip_mut_with(mu_mean, |a, &b| *a = d * *a + (1.0 - d) * b);
            self.sigma.zip_mut_with(sigma_mean, |a, &b| *a = d * *a + (1.0 - d) * b);
        }
    }

    pub fn get(&self) -> Option<(&Array1<f64>, &Array1<f64>)> {
        self.initialized.then_some((&self.mu, &self.sigma))
    }

    /// Order-invariant combination of per-path aggregates after a parallel
    /// round: the mean over initialized paths.
    pub fn merge(paths: &[SourcePriorAggregate]) -> SourcePriorAggregate {
        let live: Vec<&SourcePriorAggregate> = paths.iter().filter(|a| a.initialized).collect();
        let Some(first) = live.first() else {
            return paths.first().cloned().unwrap_or_else(|| SourcePriorAggregate::new(0));
        };
        let mut mu = Array1::zeros(first.mu.len());
        let mut sigma = Array1::zeros(first.sigma.len());
        for a in &live {
            mu += &a.mu;
            sigma += &a.sigma;
        }
        let n = live.len() as f64;
        SourcePriorAggregate {
            mu: mu / n,
            sigma: sigma / n,
            initialized: true,
            decay: first.decay,
        }
    }
}
