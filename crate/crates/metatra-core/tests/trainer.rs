//! Trainer integration tests: degenerate reductions, determinism, and the
//! latent-mixup batch contracts.

use std::sync::Arc;

use metatra_core::cvae_head::{forward_train, init_model, LossWeights, MixPlan, TrainNoise};
use metatra_core::data::synth::{Arena, SynthDomainSpec};
use metatra_core::data::window::{window_scene, TrajectoryWindow};
use metatra_core::data::synth_generate;
use metatra_core::dual_tt::{ModelConfig, RelationScheme};
use metatra_core::mgtp::{
    baseline_train, build_domain_pool, path_seed, sample_tasks, serial_inner_loop, train,
    ErmConfig, MetaConfig, OptimizerKind, Toggles, TrainSetup, TrainState, TrajectoryLossModel,
};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads_temporal: 2,
        n_heads_relation: 2,
        relation_scheme: RelationScheme::DistanceBands { band_edge: 2.0 },
        neighbor_radius: 4.0,
        d_latent: 4,
        ..Default::default()
    }
}

fn synth_domain(id: &str, speed: f64, seed: u64, n_scenes: usize) -> (String, Vec<TrajectoryWindow>) {
    let spec = SynthDomainSpec {
        domain_id: id.into(),
        agents_min: 2,
        agents_max: 3,
        speed_mean: speed,
        speed_std: 0.1,
        turn_rate: 0.05,
        goal_attraction: 0.5,
        avoidance_strength: 0.3,
        avoidance_radius: 1.0,
        arena: Arena { min_x: 0.0, min_y: 0.0, max_x: 12.0, max_y: 12.0 },
        frame_dt: 0.4,
    };
    let scenes = synth_generate(&spec, n_scenes, 14, seed).unwrap();
    let mut windows = Vec::new();
    for scene in &scenes {
        windows.extend(window_scene(scene, 4, 10, 4).unwrap());
    }
    (id.to_string(), windows)
}

fn domains(n: usize) -> Vec<(String, Vec<TrajectoryWindow>)> {
    (0..n)
        .map(|i| synth_domain(&format!("d{i}"), 0.6 + 0.3 * i as f64, 100 + i as u64, 3))
        .collect()
}

fn snapshots_equal(a: &metatra_core::ParameterSnapshot, b: &metatra_core::ParameterSnapshot) -> bool {
    a.iter().zip(b.iter()).all(|((na, va), (nb, vb))| {
        na == nb && va.iter().zip(vb.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
    })
}

#[test]
fn toggles_off_reproduces_the_erm_trace_bit_for_bit() {
    let cfg = small_config();
    let (snap, layout) = init_model(&cfg, 3).unwrap();
    let setup = TrainSetup { cfg: &cfg, layout: &layout, weights: LossWeights::default() };
    let src = domains(2);
    let meta = MetaConfig {
        epochs: 3,
        batch_agent_budget: 16,
        toggles: Toggles::default(), // all off
        ..Default::default()
    };

    let (via_train, _) =
        train(&setup, TrainState::fresh(snap.clone(), cfg.d_latent), &src, &meta, 42).unwrap();
    let erm = ErmConfig {
        optimizer: OptimizerKind::Sgd,
        lr: meta.lambda,
        epochs: 3,
        batch_agent_budget: 16,
        clip_norm: meta.clip_norm,
    };
    let (via_baseline, _) =
        baseline_train(&setup, TrainState::fresh(snap, cfg.d_latent), &src, &erm, 42).unwrap();

    assert!(snapshots_equal(&via_train.snapshot, &via_baseline.snapshot));
}

#[test]
fn single_path_full_kappa_equals_the_serial_result() {
    let cfg = small_config();
    let (snap, layout) = init_model(&cfg, 4).unwrap();
    let setup = TrainSetup { cfg: &cfg, layout: &layout, weights: LossWeights::default() };
    let src = domains(2);
    let meta = MetaConfig {
        epochs: 1,
        rounds_per_epoch: Some(1),
        parallel_paths: 1,
        serial_tasks: 3,
        kappa: 1.0,
        batch_agent_budget: 16,
        toggles: Toggles { ml: true, spt: true, mm: false },
        ..Default::default()
    };
    let seed = 9;
    let (merged, _) =
        train(&setup, TrainState::fresh(snap.clone(), cfg.d_latent), &src, &meta, seed).unwrap();

    // replay the single path by hand
    let pool = build_domain_pool(&src, meta.batch_agent_budget, seed).unwrap();
    let mut model = TrajectoryLossModel::new(
        &cfg,
        &layout,
        LossWeights::default(),
        false,
        metatra_core::mgtp::SourcePriorAggregate::new(cfg.d_latent),
        ChaCha8Rng::seed_from_u64(path_seed(seed, 0, 0, 0)),
    );
    let (theta_j, _) = serial_inner_loop(&mut model, &snap, meta.serial_tasks, &meta, |m| {
        sample_tasks(&pool, m.rng_mut())
    })
    .unwrap();

    assert!(snapshots_equal(&merged.snapshot, &theta_j));
}

#[test]
fn full_mgtp_is_deterministic_across_runs() {
    let cfg = small_config();
    let (snap, layout) = init_model(&cfg, 5).unwrap();
    let setup = TrainSetup { cfg: &cfg, layout: &layout, weights: LossWeights::default() };
    let src = domains(3);
    let meta = MetaConfig {
        epochs: 2,
        rounds_per_epoch: Some(2),
        parallel_paths: 3,
        serial_tasks: 2,
        lambda: 0.003,
        kappa: 0.5,
        batch_agent_budget: 16,
        toggles: Toggles { ml: true, spt: true, mm: true },
        ..Default::default()
    };
    let run = || {
        train(
            &setup,
            TrainState::fresh(snap.clone(), cfg.d_latent),
            &src,
            &meta,
            77,
        )
        .unwrap()
        .0
    };
    let a = run();
    let b = run();
    assert!(snapshots_equal(&a.snapshot, &b.snapshot));
    assert_eq!(a.aggregate, b.aggregate);
}

#[test]
fn second_order_mode_trains_and_differs_from_first_order() {
    let cfg = small_config();
    let (snap, layout) = init_model(&cfg, 6).unwrap();
    let setup = TrainSetup { cfg: &cfg, layout: &layout, weights: LossWeights::default() };
    let src = domains(2);
    let base = MetaConfig {
        epochs: 1,
        rounds_per_epoch: Some(1),
        parallel_paths: 1,
        serial_tasks: 1,
        lambda: 0.01,
        kappa: 1.0,
        batch_agent_budget: 16,
        toggles: Toggles { ml: true, spt: true, mm: false },
        ..Default::default()
    };
    let first = train(
        &setup,
        TrainState::fresh(snap.clone(), cfg.d_latent),
        &src,
        &base,
        11,
    )
    .unwrap()
    .0;
    let second = train(
        &setup,
        TrainState::fresh(snap, cfg.d_latent),
        &src,
        &MetaConfig { second_order: true, ..base },
        11,
    )
    .unwrap()
    .0;
    assert!(!snapshots_equal(&first.snapshot, &second.snapshot));
}

#[test]
fn metamix_doubles_the_batch_and_rho_one_is_identity() {
    let cfg = small_config();
    let (snap, layout) = init_model(&cfg, 8).unwrap();
    let weights = LossWeights::default();
    let (_, windows) = synth_domain("d", 1.0, 5, 2);
    let prepared = metatra_core::cvae_head::prepare_batch(&windows[0..2]).unwrap();
    let prepared = Arc::new(prepared);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let base_noise = TrainNoise::draw(&prepared, cfg.d_latent, &mut rng);
    let n_agents: usize = prepared.iter().map(|w| w.n_valid()).sum();

    // without mixing
    let (plain, _) =
        forward_train(&snap, &layout, &cfg, &weights, &prepared, &base_noise).unwrap();
    assert_eq!(plain.n_rows, n_agents);
    assert!(plain.halves.is_none());

    // rho = 1: the mixed half equals the base half exactly
    let mut mixed = base_noise.clone();
    mixed.mix = Some(MixPlan {
        rho: 1.0,
        z_add: prepared
            .iter()
            .map(|w| Array2::from_elem((w.n_valid(), cfg.d_latent), 123.456))
            .collect(),
    });
    let (doubled, _) = forward_train(&snap, &layout, &cfg, &weights, &prepared, &mixed).unwrap();
    assert_eq!(doubled.n_rows, 2 * n_agents);
    let halves = doubled.halves.unwrap();
    assert!((halves.pred_base - halves.pred_mix).abs() < 1e-9);
    assert!((halves.pred_base - plain.pred).abs() < 1e-9);
    assert!((halves.recon_base - plain.recon).abs() < 1e-9);
    assert!((doubled.kl - plain.kl).abs() < 1e-12);
}

#[test]
fn resume_from_mid_run_matches_uninterrupted_training() {
    let cfg = small_config();
    let (snap, layout) = init_model(&cfg, 13).unwrap();
    let setup = TrainSetup { cfg: &cfg, layout: &layout, weights: LossWeights::default() };
    let src = domains(2);
    let meta = MetaConfig {
        epochs: 4,
        rounds_per_epoch: Some(1),
        parallel_paths: 2,
        serial_tasks: 2,
        batch_agent_budget: 16,
        toggles: Toggles { ml: true, spt: true, mm: true },
        ..Default::default()
    };
    let seed = 55;
    let full = train(
        &setup,
        TrainState::fresh(snap.clone(), cfg.d_latent),
        &src,
        &meta,
        seed,
    )
    .unwrap()
    .0;

    let half_meta = MetaConfig { epochs: 2, ..meta.clone() };
    let (half, _) = train(
        &setup,
        TrainState::fresh(snap, cfg.d_latent),
        &src,
        &half_meta,
        seed,
    )
    .unwrap();
    assert_eq!(half.epoch, 2);
    let resumed = train(&setup, half, &src, &meta, seed).unwrap().0;

    assert!(snapshots_equal(&full.snapshot, &resumed.snapshot));
    assert_eq!(full.aggregate, resumed.aggregate);
}

#[test]
fn erm_with_adam_reduces_training_loss() {
    let cfg = small_config();
    let (snap, layout) = init_model(&cfg, 30).unwrap();
    let setup = TrainSetup { cfg: &cfg, layout: &layout, weights: LossWeights::default() };
    let src = vec![synth_domain("d0", 1.0, 77, 4)];
    let erm = ErmConfig {
        optimizer: OptimizerKind::adam_default(),
        lr: 2e-3,
        epochs: 30,
        batch_agent_budget: 32,
        clip_norm: Some(5.0),
    };
    let (_, report) =
        baseline_train(&setup, TrainState::fresh(snap, cfg.d_latent), &src, &erm, 1).unwrap();
    let first = report.epochs.first().unwrap().merged_eval_loss;
    let last = report.epochs.last().unwrap().merged_eval_loss;
    assert!(
        last < first,
        "loss should fall during overfit training: first={first} last={last}"
    );
}
