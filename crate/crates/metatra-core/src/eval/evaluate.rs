//! Leave-one-domain-out evaluation: best-of-K metrics per domain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cvae_head::{predict_k, ModelLayout};
use crate::data::window::TrajectoryWindow;
use crate::dual_tt::ModelConfig;
use crate::error::{CoreError, Result};
use crate::eval::metrics::{min_ade_k, min_fde_k};
use crate::mgtp::derive_seed;
use crate::params::ParameterSnapshot;

/// SHA-256 hex digest of a value's canonical JSON serialization.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("serializable config");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Metrics of one domain, averaged per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub domain_id: String,
    pub min_ade: f64,
    pub min_fde: f64,
    pub n_agents: usize,
    pub n_windows: usize,
}

/// Evaluation report, serialized to JSON by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub domains: Vec<DomainMetrics>,
    pub mean_min_ade: f64,
    pub mean_min_fde: f64,
    pub k: usize,
    pub seed: u64,
    pub config_digest: String,
}

/// Run best-of-K prediction over every window and reduce per domain.
/// Deterministic given `(params, windows, k, seed)`.
pub fn evaluate(
    snap: &ParameterSnapshot,
    layout: &ModelLayout,
    cfg: &ModelConfig,
    windows: &[TrajectoryWindow],
    k: usize,
    seed: u64,
) -> Result<MetricsReport> {
    if windows.is_empty() {
        return Err(CoreError::Usage("evaluation target has no windows".into()));
    }
    if k == 0 {
        return Err(CoreError::Usage("K must be >= 1".into()));
    }

    struct Acc {
        ade_sum: f64,
        fde_sum: f64,
        n_agents: usize,
        n_windows: usize,
    }
    let mut per_domain: BTreeMap<String, Acc> = BTreeMap::new();

    for (wi, window) in windows.iter().enumerate() {
        let preds = predict_k(snap, layout, cfg, window, k, derive_seed(&[seed, wi as u64]))?;
        let acc = per_domain.entry(window.domain_id.clone()).or_insert(Acc {
            ade_sum: 0.0,
            fde_sum: 0.0,
            n_agents: 0,
            n_windows: 0,
        });
        acc.n_windows += 1;
        for (slot, agent) in window.agents.iter().enumerate() {
            if !agent.valid {
                continue;
            }
            let candidates: Vec<ndarray::Array2<f64>> = preds
                .iter()
                .map(|p| p.y_hat[slot].clone().expect("valid slot has prediction"))
                .collect();
            acc.ade_sum += min_ade_k(&candidates, &agent.future)?;
            acc.fde_sum += min_fde_k(&candidates, &agent.future)?;
            acc.n_agents += 1;
        }
    }

    let domains: Vec<DomainMetrics> = per_domain
        .into_iter()
        .map(|(domain_id, acc)| DomainMetrics {
            domain_id,
            min_ade: acc.ade_sum / acc.n_agents.max(1) as f64,
            min_fde: acc.fde_sum / acc.n_agents.max(1) as f64,
            n_agents: acc.n_agents,
            n_windows: acc.n_windows,
        })
        .collect();
    let n = domains.len() as f64;
    let mean_min_ade = domains.iter().map(|d| d.min_ade).sum::<f64>() / n;
    let mean_min_fde = domains.iter().map(|d| d.min_fde).sum::<f64>() / n;

    Ok(MetricsReport {
        domains,
        mean_min_ade,
        mean_min_fde,
        k,
        seed,
        config_digest: config_digest(cfg),
    })
}
