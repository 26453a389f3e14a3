//! Training drivers: the meta-learning loop (serial inner steps across
//! parallel paths with an averaging merge) and the plain pooled-source ERM
//! baseline it degenerates to when every toggle is off.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cvae_head::{
    loss_and_grad, prepare_batch, LossWeights, ModelLayout, PreparedWindow, TrainNoise,
};
use crate::data::window::{make_batches, TrajectoryWindow};
use crate::dual_tt::ModelConfig;
use crate::error::{CoreError, Result};
use crate::mgtp::aggregate::SourcePriorAggregate;
use crate::mgtp::config::{MetaConfig, OptimizerKind};
use crate::mgtp::inner::{inner_step, serial_inner_loop, InnerStepStats};
use crate::mgtp::model_loss::TrajectoryLossModel;
use crate::mgtp::outer::parallel_outer_update;
use crate::mgtp::tasks::{sample_tasks, DomainBatches, DomainPool};
use crate::params::ParameterSnapshot;

const TAG_BATCH: u64 = 0x0b17c4;
const TAG_ERM_EPOCH: u64 = 0x3e9a01;
const TAG_NOISE: u64 = 0x52a9d3;
const TAG_PATH: u64 = 0x9c0ffe;
const TAG_PROBE: u64 = 0x7a0b3d;

/// Stream seed of one parallel path at (epoch, round, path index); exposed so
/// external tooling can replay a single path.
pub fn path_seed(seed: u64, epoch: usize, round: usize, path: usize) -> u64 {
    derive_seed(&[seed, TAG_PATH, epoch as u64, round as u64, path as u64])
}

/// Deterministic seed derivation (splitmix64 over the parts).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9e3779b97f4a7c15u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_mul(0xbf58476d1ce4e5b9);
        z ^= z >> 27;
        z = z.wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
    }
    z
}

/// Immutable model pieces shared by every training entry point.
pub struct TrainSetup<'a> {
    pub cfg: &'a ModelConfig,
    pub layout: &'a ModelLayout,
    pub weights: LossWeights,
}

/// Adam moments, persisted for bit-exact resume.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParameterSnapshot,
    pub v: ParameterSnapshot,
    pub t: u64,
}

/// Everything that evolves across epochs.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub snapshot: ParameterSnapshot,
    pub aggregate: SourcePriorAggregate,
    pub epoch: usize,
    pub adam: Option<AdamState>,
}

impl TrainState {
    pub fn fresh(snapshot: ParameterSnapshot, d_latent: usize) -> Self {
        TrainState {
            snapshot,
            aggregate: SourcePriorAggregate::new(d_latent),
            epoch: 0,
            adam: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrState {
    pub lambda: f64,
    pub kappa: Option<f64>,
}

/// One line of the per-epoch training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub path_losses: Vec<f64>,
    pub merged_eval_loss: f64,
    pub lr: LrState,
    /// Meta-test batches that requested mixup before source stats existed.
    pub mix_fallbacks: usize,
}

/// One line of the per-step loss-component log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossLogEntry {
    pub step: usize,
    pub pred: f64,
    pub kl: f64,
    pub recon: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub losses: Vec<LossLogEntry>,
}

/// ERM settings: plain gradient descent over pooled source batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErmConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_agent_budget: usize,
    pub clip_norm: Option<f64>,
}

/// Build the per-domain batch pool used by meta-task sampling.
pub fn build_domain_pool(
    domains: &[(String, Vec<TrajectoryWindow>)],
    budget: usize,
    seed: u64,
) -> Result<DomainPool> {
    let mut out = Vec::with_capacity(domains.len());
    for (d_idx, (id, windows)) in domains.iter().enumerate() {
        if windows.is_empty() {
            return Err(CoreError::Config(format!("domain {id:?} has no windows")));
        }
        let batches = make_batches(windows, budget, derive_seed(&[seed, TAG_BATCH, d_idx as u64]))?;
        let prepared: Result<Vec<Arc<Vec<PreparedWindow>>>> = batches
            .iter()
            .map(|b| prepare_batch(&b.windows).map(Arc::new))
            .collect();
        out.push(DomainBatches { domain_id: id.clone(), batches: prepared? });
    }
    let pool = DomainPool { domains: out };
    pool.validate()?;
    Ok(pool)
}

fn check_finite(loss: f64, grads: &ParameterSnapshot) -> Result<()> {
    if !loss.is_finite() {
        return Err(CoreError::Numeric(format!("non-finite training loss: {loss}")));
    }
    if let Some((name, pos)) = grads.find_non_finite() {
        return Err(CoreError::Numeric(format!(
            "non-finite gradient in `{name}` at flat index {pos}"
        )));
    }
    Ok(())
}

fn optimizer_step(
    theta: &mut ParameterSnapshot,
    grads: &ParameterSnapshot,
    kind: OptimizerKind,
    lr: f64,
    adam: &mut Option<AdamState>,
) -> Result<()> {
    match kind {
        OptimizerKind::Sgd => theta.axpy(-lr, grads),
        OptimizerKind::Adam { beta1, beta2, eps } => {
            let st = adam.get_or_insert_with(|| AdamState {
                m: theta.zeros_like(),
                v: theta.zeros_like(),
                t: 0,
            });
            st.t += 1;
            let bc1 = 1.0 - beta1.powi(st.t as i32);
            let bc2 = 1.0 - beta2.powi(st.t as i32);
            for idx in 0..theta.len() {
                st.m
                    .array_mut(idx)
                    .zip_mut_with(grads.array(idx), |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                st.v
                    .array_mut(idx)
                    .zip_mut_with(grads.array(idx), |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
                let m = st.m.array(idx);
                let v = st.v.array(idx);
                let t = theta.array_mut(idx);
                let (ms, vs, ts) = (
                    m.as_slice().expect("standard layout"),
                    v.as_slice().expect("standard layout"),
                    t.as_slice_mut().expect("standard layout"),
                );
                for i in 0..ts.len() {
                    let m_hat = ms[i] / bc1;
                    let v_hat = vs[i] / bc2;
                    ts[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            Ok(())
        }
    }
}

/// Loss of θ on a fixed probe batch with epoch-derived noise; the
/// `merged_eval_loss` column of the epoch log.
fn probe_loss(
    setup: &TrainSetup<'_>,
    theta: &ParameterSnapshot,
    probe: &[PreparedWindow],
    seed: u64,
    epoch: usize,
) -> Result<(f64, LossLogEntry)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, TAG_PROBE, epoch as u64]));
    let noise = TrainNoise::draw(probe, setup.cfg.d_latent, &mut rng);
    let (b, _) = crate::cvae_head::forward_train(
        theta,
        setup.layout,
        setup.cfg,
        &setup.weights,
        probe,
        &noise,
    )?;
    Ok((
        b.total,
        LossLogEntry { step: epoch, pred: b.pred, kl: b.kl, recon: b.recon, total: b.total },
    ))
}

/// Plain ERM: pooled source batches, one optimizer step per batch.
pub fn baseline_train(
    setup: &TrainSetup<'_>,
    mut state: TrainState,
    domains: &[(String, Vec<TrajectoryWindow>)],
    erm: &ErmConfig,
    seed: u64,
) -> Result<(TrainState, TrainReport)> {
    if domains.is_empty() || domains.iter().all(|(_, w)| w.is_empty()) {
        return Err(CoreError::Config("ERM needs at least one non-empty domain".into()));
    }
    let pooled: Vec<TrajectoryWindow> = domains
        .iter()
        .flat_map(|(_, w)| w.iter().cloned())
        .collect();
    let mut report = TrainReport::default();
    let mut step_counter = state.epoch * 1_000_000; // monotone across resumes

    for epoch in state.epoch..erm.epochs {
        let batches = make_batches(
            &pooled,
            erm.batch_agent_budget,
            derive_seed(&[seed, TAG_ERM_EPOCH, epoch as u64]),
        )?;
        let mut epoch_losses = Vec::with_capacity(batches.len());
        for (bi, batch) in batches.iter().enumerate() {
            let prepared = prepare_batch(&batch.windows)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
                seed,
                TAG_NOISE,
                epoch as u64,
                bi as u64,
            ]));
            let noise = TrainNoise::draw(&prepared, setup.cfg.d_latent, &mut rng);
            let (breakdown, mut grads) = loss_and_grad(
                &state.snapshot,
                setup.layout,
                setup.cfg,
                &setup.weights,
                &prepared,
                &noise,
            )?;
            check_finite(breakdown.total, &grads)?;
            if let Some(c) = erm.clip_norm {
                grads.clip_global_norm(c);
            }
            optimizer_step(&mut state.snapshot, &grads, erm.optimizer, erm.lr, &mut state.adam)?;
            report.losses.push(LossLogEntry {
                step: step_counter,
                pred: breakdown.pred,
                kl: breakdown.kl,
                recon: breakdown.recon,
                total: breakdown.total,
            });
            step_counter += 1;
            epoch_losses.push(breakdown.total);
        }
        let mean = epoch_losses.iter().sum::<f64>() / epoch_losses.len().max(1) as f64;
        report.epochs.push(EpochLog {
            epoch,
            path_losses: vec![mean],
            merged_eval_loss: mean,
            lr: LrState { lambda: erm.lr, kappa: None },
            mix_fallbacks: 0,
        });
        state.epoch = epoch + 1;
    }
    Ok((state, report))
}

struct PathResult {
    theta: ParameterSnapshot,
    aggregate: SourcePriorAggregate,
    stats: Vec<InnerStepStats>,
    fallbacks: usize,
}

/// The full meta-training loop. With every toggle off this delegates to
/// [`baseline_train`], reproducing its parameter trace bit for bit.
pub fn train(
    setup: &TrainSetup<'_>,
    mut state: TrainState,
    domains: &[(String, Vec<TrajectoryWindow>)],
    meta: &MetaConfig,
    seed: u64,
) -> Result<(TrainState, TrainReport)> {
    meta.validate()?;
    if !meta.toggles.ml {
        let erm = ErmConfig {
            optimizer: meta.erm_optimizer.kind,
            lr: meta.erm_lr(),
            epochs: meta.epochs,
            batch_agent_budget: meta.batch_agent_budget,
            clip_norm: meta.clip_norm,
        };
        return baseline_train(setup, state, domains, &erm, seed);
    }
    if domains.len() < 2 {
        return Err(CoreError::Config(
            "meta-learning needs >= 2 source domains; disable ML for single-domain ERM".into(),
        ));
    }

    let pool = build_domain_pool(domains, meta.batch_agent_budget, seed)?;
    let probe = pool.domains[0].batches[0].clone();
    let total_batches = pool.total_batches();
    let grads_per_step = 2; // meta-train + meta-test evaluations
    let rounds = meta.rounds_per_epoch.unwrap_or_else(|| {
        let per_round = if meta.toggles.spt {
            meta.parallel_paths * meta.serial_tasks * grads_per_step
        } else {
            grads_per_step
        };
        (total_batches + per_round - 1) / per_round
    });

    let mut report = TrainReport::default();
    for epoch in state.epoch..meta.epochs {
        let mut path_loss_sums = vec![0.0f64; if meta.toggles.spt { meta.parallel_paths } else { 1 }];
        let mut path_loss_counts = vec![0usize; path_loss_sums.len()];
        let mut fallbacks = 0usize;

        for round in 0..rounds {
            if meta.toggles.spt {
                let results: Result<Vec<PathResult>> = (0..meta.parallel_paths)
                    .into_par_iter()
                    .map(|c| {
                        let mut model = TrajectoryLossModel::new(
                            setup.cfg,
                            setup.layout,
                            setup.weights,
                            meta.toggles.mm,
                            state.aggregate.clone(),
                            ChaCha8Rng::seed_from_u64(path_seed(seed, epoch, round, c)),
                        );
                        let (theta_j, stats) = serial_inner_loop(
                            &mut model,
                            &state.snapshot,
                            meta.serial_tasks,
                            meta,
                            |m| sample_tasks(&pool, m.rng_mut()),
                        )?;
                        Ok(PathResult {
                            theta: theta_j,
                            aggregate: model.aggregate,
                            stats,
                            fallbacks: model.mix_fallbacks,
                        })
                    })
                    .collect();
                let results = results?;
                let thetas: Vec<ParameterSnapshot> =
                    results.iter().map(|r| r.theta.clone()).collect();
                parallel_outer_update(&mut state.snapshot, &thetas, meta.kappa)?;
                state.aggregate = SourcePriorAggregate::merge(
                    &results.iter().map(|r| r.aggregate.clone()).collect::<Vec<_>>(),
                );
                for (c, r) in results.iter().enumerate() {
                    for s in &r.stats {
                        path_loss_sums[c] += 0.5 * (s.meta_train_loss + s.meta_test_loss);
                        path_loss_counts[c] += 1;
                    }
                    fallbacks += r.fallbacks;
                }
            } else {
                // Basic meta step applied directly to θ (no merge):
                // θ ← θ − (λ_S ∇L_S(θ) + λ_T ∇L_T(θ'))
                let mut model = TrajectoryLossModel::new(
                    setup.cfg,
                    setup.layout,
                    setup.weights,
                    meta.toggles.mm,
                    state.aggregate.clone(),
                    ChaCha8Rng::seed_from_u64(path_seed(seed, epoch, round, 0)),
                );
                let (task_s, task_t) = sample_tasks(&pool, model.rng_mut())?;
                let (next, stats) =
                    inner_step(&mut model, &state.snapshot, &task_s, &task_t, meta)?;
                state.snapshot = next;
                state.aggregate = model.aggregate;
                fallbacks += model.mix_fallbacks;
                path_loss_sums[0] += 0.5 * (stats.meta_train_loss + stats.meta_test_loss);
                path_loss_counts[0] += 1;
            }
        }

        let (merged_eval_loss, loss_entry) =
            probe_loss(setup, &state.snapshot, &probe, seed, epoch)?;
        report.losses.push(loss_entry);
        report.epochs.push(EpochLog {
            epoch,
            path_losses: path_loss_sums
                .iter()
                .zip(&path_loss_counts)
                .map(|(s, &c)| s / c.max(1) as f64)
                .collect(),
            merged_eval_loss,
            lr: LrState { lambda: meta.lambda, kappa: Some(meta.kappa) },
            mix_fallbacks: fallbacks,
        });
        state.epoch = epoch + 1;
    }
    Ok((state, report))
}
