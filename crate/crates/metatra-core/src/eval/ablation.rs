//! Ablation-grid runner: train and evaluate toggle variants with matched
//! seeds, reporting mean ± std over seeds.

use serde::{Deserialize, Serialize};

use crate::cvae_head::{init_model, LossWeights};
use crate::data::window::TrajectoryWindow;
use crate::dual_tt::ModelConfig;
use crate::error::{CoreError, Result};
use crate::eval::evaluate::{config_digest, evaluate};
use crate::mgtp::{train, MetaConfig, Toggles, TrainSetup, TrainState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub toggles: Toggles,
    pub mean_min_ade: f64,
    pub std_min_ade: f64,
    pub mean_min_fde: f64,
    pub std_min_fde: f64,
    /// Per seed: (seed, minADE, minFDE) on the held-out domain.
    pub per_seed: Vec<(u64, f64, f64)>,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub k: usize,
    pub held_out: String,
}

impl AblationTable {
    /// CSV with one row per variant.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "ml,spt,mm,mean_min_ade,std_min_ade,mean_min_fde,std_min_fde,seeds,config_digest\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                row.toggles.ml,
                row.toggles.spt,
                row.toggles.mm,
                row.mean_min_ade,
                row.std_min_ade,
                row.mean_min_fde,
                row.std_min_fde,
                row.per_seed.len(),
                row.config_digest,
            ));
        }
        out
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Train and evaluate each toggle variant with matched seeds.
#[allow(clippy::too_many_arguments)]
pub fn ablation_grid(
    cfg: &ModelConfig,
    weights: LossWeights,
    meta_base: &MetaConfig,
    rows: &[Toggles],
    sources: &[(String, Vec<TrajectoryWindow>)],
    target: &(String, Vec<TrajectoryWindow>),
    k: usize,
    seeds: &[u64],
) -> Result<AblationTable> {
    if seeds.is_empty() || rows.is_empty() {
        return Err(CoreError::Usage("need at least one seed and one toggle row".into()));
    }
    for t in rows {
        t.validate()?;
    }

    let mut table_rows = Vec::with_capacity(rows.len());
    for toggles in rows {
        let meta = MetaConfig { toggles: *toggles, ..meta_base.clone() };
        let mut ades = Vec::with_capacity(seeds.len());
        let mut fdes = Vec::with_capacity(seeds.len());
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let (snapshot, layout) = init_model(cfg, seed)?;
            let setup = TrainSetup { cfg, layout: &layout, weights };
            let state = TrainState::fresh(snapshot, cfg.d_latent);
            let (state, _) = train(&setup, state, sources, &meta, seed)?;
            let report = evaluate(&state.snapshot, &layout, cfg, &target.1, k, seed)?;
            ades.push(report.mean_min_ade);
            fdes.push(report.mean_min_fde);
            per_seed.push((seed, report.mean_min_ade, report.mean_min_fde));
        }
        let (mean_ade, std_ade) = mean_std(&ades);
        let (mean_fde, std_fde) = mean_std(&fdes);
        table_rows.push(AblationRow {
            toggles: *toggles,
            mean_min_ade: mean_ade,
            std_min_ade: std_ade,
            mean_min_fde: mean_fde,
            std_min_fde: std_fde,
            per_seed,
            config_digest: config_digest(&(cfg, &meta)),
        });
    }
    Ok(AblationTable { rows: table_rows, k, held_out: target.0.clone() })
}

/// The standard four-row grid: off/off/off through on/on/on.
pub fn standard_grid() -> Vec<Toggles> {
    vec![
        Toggles { ml: false, spt: false, mm: false },
        Toggles { ml: true, spt: false, mm: false },
        Toggles { ml: true, spt: true, mm: false },
        Toggles { ml: true, spt: true, mm: true },
    ]
}
