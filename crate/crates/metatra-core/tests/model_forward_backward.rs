//! End-to-end checks of the model forward/backward: finite-difference
//! gradient validation on a tiny configuration, masking soundness, and the
//! documented loss conventions.

use metatra_core::cvae_head::{
    forward_train, init_model, loss_and_grad, predict_k, prepare_batch, LossWeights, TrainNoise,
};
use metatra_core::data::scene::AgentType;
use metatra_core::data::window::{TrajectoryWindow, WindowAgent};
use metatra_core::dual_tt::{ModelConfig, RelationScheme};
use metatra_core::gradcheck::{finite_difference_grads, max_relative_error};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        d_model: 4,
        n_heads_temporal: 2,
        n_heads_relation: 2,
        relation_scheme: RelationScheme::DistanceBands { band_edge: 1.5 },
        neighbor_radius: 3.0,
        d_latent: 4,
        ..Default::default()
    }
}

fn random_window(n_agents: usize, t_obs: usize, t_pre: usize, seed: u64) -> TrajectoryWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = (0..n_agents)
        .map(|i| {
            let start = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let vel = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let coords: Vec<[f64; 2]> = (0..t_pre)
                .map(|t| {
                    [
                        start[0] + vel[0] * t as f64 + rng.gen_range(-0.05..0.05),
                        start[1] + vel[1] * t as f64 + rng.gen_range(-0.05..0.05),
                    ]
                })
                .collect();
            let past = Array2::from_shape_fn((t_obs, 2), |(t, c)| coords[t][c]);
            let future = Array2::from_shape_fn((t_pre - t_obs, 2), |(t, c)| coords[t_obs + t][c]);
            WindowAgent {
                agent_id: i as i64,
                agent_type: AgentType::Pedestrian,
                past,
                future,
                valid: true,
            }
        })
        .collect();
    TrajectoryWindow {
        domain_id: "test".into(),
        t_obs,
        t_pre,
        start_frame: 0,
        agents,
    }
}

#[test]
fn analytic_gradients_match_finite_differences_on_tiny_config() {
    let cfg = tiny_config();
    let weights = LossWeights { zeta: 1.0, eta: 0.5 };
    let (snap, layout) = init_model(&cfg, 42).unwrap();
    let window = random_window(3, 4, 6, 7);
    let prepared = prepare_batch(&[window]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let noise = TrainNoise::draw(&prepared, cfg.d_latent, &mut rng);

    let (_, analytic) = loss_and_grad(&snap, &layout, &cfg, &weights, &prepared, &noise).unwrap();
    let numeric = finite_difference_grads(&snap, 1e-5, |s| {
        forward_train(s, &layout, &cfg, &weights, &prepared, &noise)
            .unwrap()
            .0
            .total
    });
    let (worst, name) = max_relative_error(&analytic, &numeric, metatra_core::gradcheck::DEFAULT_FLOOR);
    assert!(worst < 1e-4, "worst relative error {worst} in {name}");
}

#[test]
fn gradcheck_with_latent_mixup_active() {
    let cfg = tiny_config();
    let weights = LossWeights { zeta: 0.7, eta: 0.3 };
    let (snap, layout) = init_model(&cfg, 5).unwrap();
    let window = random_window(2, 4, 6, 17);
    let prepared = prepare_batch(&[window]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut noise = TrainNoise::draw(&prepared, cfg.d_latent, &mut rng);
    noise.mix = Some(metatra_core::cvae_head::MixPlan {
        rho: 0.4,
        z_add: prepared
            .iter()
            .map(|w| Array2::from_shape_fn((w.n_valid(), cfg.d_latent), |_| rng.gen_range(-1.0..1.0)))
            .collect(),
    });

    let (breakdown, analytic) =
        loss_and_grad(&snap, &layout, &cfg, &weights, &prepared, &noise).unwrap();
    assert_eq!(breakdown.n_rows, 2 * breakdown.n_agents);
    let numeric = finite_difference_grads(&snap, 1e-5, |s| {
        forward_train(s, &layout, &cfg, &weights, &prepared, &noise)
            .unwrap()
            .0
            .total
    });
    let (worst, name) = max_relative_error(&analytic, &numeric, metatra_core::gradcheck::DEFAULT_FLOOR);
    assert!(worst < 1e-4, "worst relative error {worst} in {name}");
}

#[test]
fn padded_agent_does_not_change_valid_outputs() {
    let cfg = tiny_config();
    let weights = LossWeights::default();
    let (snap, layout) = init_model(&cfg, 1).unwrap();
    let window = random_window(3, 4, 6, 23);
    let mut padded = window.clone();
    padded.push_padding();
    padded.push_padding();

    let k = 4;
    let base = predict_k(&snap, &layout, &cfg, &window, k, 77).unwrap();
    let with_pad = predict_k(&snap, &layout, &cfg, &padded, k, 77).unwrap();
    for (a, b) in base.iter().zip(with_pad.iter()) {
        for slot in 0..window.agents.len() {
            let ya = a.y_hat[slot].as_ref().unwrap();
            let yb = b.y_hat[slot].as_ref().unwrap();
            for (x, y) in ya.iter().zip(yb.iter()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        for slot in window.agents.len()..padded.agents.len() {
            assert!(b.y_hat[slot].is_none());
        }
    }

    // training loss is also unaffected
    let prep_a = prepare_batch(&[window]).unwrap();
    let prep_b = prepare_batch(&[padded]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = TrainNoise::draw(&prep_a, cfg.d_latent, &mut rng);
    let (la, _) = forward_train(&snap, &layout, &cfg, &weights, &prep_a, &noise).unwrap();
    let (lb, _) = forward_train(&snap, &layout, &cfg, &weights, &prep_b, &noise).unwrap();
    assert!((la.total - lb.total).abs() < 1e-9);
}

#[test]
fn predict_is_deterministic_and_anchored() {
    let cfg = tiny_config();
    let (mut snap, layout) = init_model(&cfg, 2).unwrap();
    let window = random_window(2, 4, 6, 31);

    let a = predict_k(&snap, &layout, &cfg, &window, 3, 5).unwrap();
    let b = predict_k(&snap, &layout, &cfg, &window, 3, 5).unwrap();
    for (pa, pb) in a.iter().zip(b.iter()) {
        for slot in 0..2 {
            assert_eq!(pa.y_hat[slot], pb.y_hat[slot]);
        }
    }

    // zero readout weights: prediction collapses to the last observed position
    let w_out_f = snap.index_of("dec_future.w_out").unwrap();
    let b_out_f = snap.index_of("dec_future.b_out").unwrap();
    snap.array_mut(w_out_f).fill(0.0);
    snap.array_mut(b_out_f).fill(0.0);
    let preds = predict_k(&snap, &layout, &cfg, &window, 1, 5).unwrap();
    for slot in 0..2 {
        let y = preds[0].y_hat[slot].as_ref().unwrap();
        let last = &window.agents[slot].past;
        let t_last = window.t_obs - 1;
        for t in 0..y.nrows() {
            assert!((y[[t, 0]] - last[[t_last, 0]]).abs() < 1e-9);
            assert!((y[[t, 1]] - last[[t_last, 1]]).abs() < 1e-9);
        }
    }
}

#[test]
fn loss_conventions_hold() {
    use metatra_core::cvae_head::{loss_total, LatentDistribution};
    use ndarray::array;

    // perfect prediction and q = p: zero loss
    let q = LatentDistribution { mu: array![[0.5]], sigma: array![[0.8]] };
    let y = vec![array![[1.0, 2.0], [3.0, 4.0]]];
    let x = vec![array![[0.0, 0.0]]];
    let weights = LossWeights { zeta: 1.0, eta: 0.5 };
    let b = loss_total(&y, &y.clone(), &x, &x.clone(), &q, &q.clone(), &weights).unwrap();
    assert_eq!(b.total, 0.0);

    // constant offset (1,0) over 2 steps, one agent, zeta=eta=0: loss 1.0
    let y_hat = vec![array![[2.0, 2.0], [4.0, 4.0]]];
    let weights0 = LossWeights { zeta: 0.0, eta: 0.0 };
    let b = loss_total(&y_hat, &y, &x, &x.clone(), &q, &q.clone(), &weights0).unwrap();
    assert!((b.total - 1.0).abs() < 1e-12);
    assert_eq!(b.total, b.pred);

    // decomposition: total = pred + zeta*kl + eta*recon
    let p = LatentDistribution { mu: array![[0.0]], sigma: array![[1.0]] };
    let x_hat = vec![array![[0.5, 0.5]]];
    let b = loss_total(&y_hat, &y, &x_hat, &x, &q, &p, &weights).unwrap();
    assert!((b.total - (b.pred + weights.zeta * b.kl + weights.eta * b.recon)).abs() < 1e-15);
}
