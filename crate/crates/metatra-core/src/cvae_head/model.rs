//! Full model wiring: dual-path encoders for past and future, the latent
//! heads, residual decoders, the training loss, and K-sample prediction.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cvae_head::decoder::{
    displacements_to_positions, gru_backward, gru_forward, positions_backward, register_gru,
    GruCache, GruLayout,
};
use crate::cvae_head::latent::{
    kl_element, kl_element_backward, sigmoid, softplus, softplus_inv, standard_noise,
    LatentDistribution,
};
use crate::data::window::TrajectoryWindow;
use crate::dual_tt::config::ModelConfig;
use crate::dual_tt::encoder::{
    encode_backward, encode_forward, register_encoder, EncodeCache, EncoderInput, EncoderLayout,
};
use crate::error::{CoreError, Result};
use crate::params::ParameterSnapshot;

/// Weights of the KL and reconstruction terms in the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub zeta: f64,
    pub eta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { zeta: 1.0, eta: 0.5 }
    }
}

/// Whether the model runs with ground-truth futures available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Slot indices of one latent head (mu and sigma projections).
#[derive(Debug, Clone)]
pub struct HeadLayout {
    pub w_mu: usize,
    pub b_mu: usize,
    pub w_sigma: usize,
    pub b_sigma: usize,
}

fn register_head(
    snap: &mut ParameterSnapshot,
    prefix: &str,
    d_in: usize,
    d_latent: usize,
    rng: &mut ChaCha8Rng,
) -> HeadLayout {
    use rand::Rng;
    let limit = (6.0 / (d_in + d_latent) as f64).sqrt();
    let xavier =
        |rng: &mut ChaCha8Rng| Array2::from_shape_fn((d_latent, d_in), |_| rng.gen_range(-limit..limit));
    HeadLayout {
        w_mu: snap.register(format!("{prefix}.w_mu"), xavier(rng).into_dyn()),
        b_mu: snap.register(format!("{prefix}.b_mu"), Array1::<f64>::zeros(d_latent).into_dyn()),
        w_sigma: snap.register(format!("{prefix}.w_sigma"), xavier(rng).into_dyn()),
        // softplus(bias) = 1 at init
        b_sigma: snap.register(
            format!("{prefix}.b_sigma"),
            Array1::<f64>::from_elem(d_latent, softplus_inv(1.0)).into_dyn(),
        ),
    }
}

/// Slot indices of every trainable array in the model.
#[derive(Debug, Clone)]
pub struct ModelLayout {
    pub enc_past: EncoderLayout,
    pub enc_future: EncoderLayout,
    pub head_past: HeadLayout,
    pub head_future: HeadLayout,
    pub dec_past: GruLayout,
    pub dec_future: GruLayout,
}

/// Register and initialize every trainable array. Deterministic given seed.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<(ParameterSnapshot, ModelLayout)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut snap = ParameterSnapshot::new();
    let d = cfg.d_model;
    let enc_past = register_encoder(&mut snap, "enc_past", cfg, &mut rng);
    let enc_future = register_encoder(&mut snap, "enc_future", cfg, &mut rng);
    let head_past = register_head(&mut snap, "head_past", 2 * d, cfg.d_latent, &mut rng);
    let head_future = register_head(&mut snap, "head_future", 4 * d, cfg.d_latent, &mut rng);
    let d_ctx = cfg.d_latent + 2 * d;
    let dec_past = register_gru(&mut snap, "dec_past", d_ctx, d, &mut rng);
    let dec_future = register_gru(&mut snap, "dec_future", d_ctx, d, &mut rng);
    Ok((
        snap,
        ModelLayout { enc_past, enc_future, head_past, head_future, dec_past, dec_future },
    ))
}

/// A window after relativization, shaped for the encoders.
#[derive(Debug, Clone)]
pub struct PreparedWindow {
    pub past: EncoderInput,
    pub future: EncoderInput,
    /// Slot indices of valid agents (compact index -> slot).
    pub valid_slots: Vec<usize>,
    pub reference: [f64; 2],
    /// Per compact agent: first and last observed (relativized) positions.
    pub anchors_first: Vec<[f64; 2]>,
    pub anchors_last: Vec<[f64; 2]>,
    pub t_obs: usize,
    pub t_fut: usize,
}

impl PreparedWindow {
    pub fn n_valid(&self) -> usize {
        self.valid_slots.len()
    }
}

/// Relativize a window and lay it out for the model.
pub fn prepare_window(window: &TrajectoryWindow) -> Result<PreparedWindow> {
    let (shifted, reference) = crate::data::window::relativize(window)?;
    let n = shifted.agents.len();
    let t_obs = shifted.t_obs;
    let t_fut = shifted.future_len();
    let mut past_coords = Vec::with_capacity(n);
    let mut future_coords = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    let mut types = Vec::with_capacity(n);
    let mut valid_slots = Vec::new();
    let mut anchors_first = Vec::new();
    let mut anchors_last = Vec::new();
    for (i, agent) in shifted.agents.iter().enumerate() {
        valid.push(agent.valid);
        types.push(agent.agent_type);
        if agent.valid {
            valid_slots.push(i);
            anchors_first.push([agent.past[[0, 0]], agent.past[[0, 1]]]);
            anchors_last.push([agent.past[[t_obs - 1, 0]], agent.past[[t_obs - 1, 1]]]);
            past_coords.push(agent.past.clone());
            future_coords.push(agent.future.clone());
        } else {
            past_coords.push(Array2::zeros((t_obs, 2)));
            future_coords.push(Array2::zeros((t_fut, 2)));
        }
    }
    Ok(PreparedWindow {
        past: EncoderInput { coords: past_coords, valid: valid.clone(), types: types.clone() },
        future: EncoderInput { coords: future_coords, valid, types },
        valid_slots,
        reference,
        anchors_first,
        anchors_last,
        t_obs,
        t_fut,
    })
}

pub fn prepare_batch(windows: &[TrajectoryWindow]) -> Result<Vec<PreparedWindow>> {
    windows.iter().map(prepare_window).collect()
}

/// Frozen stochasticity of one training forward pass.
#[derive(Debug, Clone)]
pub struct TrainNoise {
    /// Per window: `n_valid x d_latent` standard-normal draws.
    pub eps: Vec<Array2<f64>>,
    /// Latent augmentation of the meta-test batch, when active.
    pub mix: Option<MixPlan>,
}

/// Values for the additive latent mixup: `Z_mix = Z + (1 - rho) * z_add`.
#[derive(Debug, Clone)]
pub struct MixPlan {
    pub rho: f64,
    /// Per window: `n_valid x d_latent` draws from the source aggregate.
    pub z_add: Vec<Array2<f64>>,
}

impl TrainNoise {
    /// Plain posterior noise for a prepared batch.
    pub fn draw(prepared: &[PreparedWindow], d_latent: usize, rng: &mut ChaCha8Rng) -> Self {
        let eps = prepared
            .iter()
            .map(|w| standard_noise(w.n_valid(), d_latent, rng))
            .collect();
        TrainNoise { eps, mix: None }
    }
}

/// Loss value with its components. `n_rows` counts decoded trajectories
/// (2B under latent mixup), `n_agents` counts distinct agents (B).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub pred: f64,
    pub kl: f64,
    pub recon: f64,
    pub n_agents: usize,
    pub n_rows: usize,
    pub halves: Option<LossHalves>,
}

/// Per-half components when the batch is doubled by latent mixup.
/// Each half is normalized as if it were the whole batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossHalves {
    pub pred_base: f64,
    pub recon_base: f64,
    pub pred_mix: f64,
    pub recon_mix: f64,
}

pub struct WindowCache {
    enc_past: EncodeCache,
    enc_future: EncodeCache,
    fused_past: Array2<f64>,
    cat: Array2<f64>,
    mu_p: Array2<f64>,
    pre_sig_p: Array2<f64>,
    sig_p: Array2<f64>,
    mu_q: Array2<f64>,
    pre_sig_q: Array2<f64>,
    sig_q: Array2<f64>,
    z_rows: Array2<f64>,
    dec_past: Vec<GruCache>,
    dec_future: Vec<GruCache>,
    x_hat: Vec<Array2<f64>>,
    y_hat: Vec<Array2<f64>>,
}

pub struct TrainCache {
    pub windows: Vec<WindowCache>,
    /// Batch-mean posterior statistics over all valid agents (mu_q, sigma_q).
    pub posterior_mean: (Array1<f64>, Array1<f64>),
}

fn apply_head(
    snap: &ParameterSnapshot,
    hl: &HeadLayout,
    input: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mu = input.dot(&snap.m2(hl.w_mu).t()) + &snap.v1(hl.b_mu);
    let pre_sig = input.dot(&snap.m2(hl.w_sigma).t()) + &snap.v1(hl.b_sigma);
    let sig = pre_sig.mapv(softplus);
    (mu, pre_sig, sig)
}

fn select_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

/// Posterior/prior head over fused features (one row per agent).
pub fn past_encoder(
    snap: &ParameterSnapshot,
    layout: &ModelLayout,
    fused_past: ArrayView2<'_, f64>,
) -> LatentDistribution {
    let (mu, _, sig) = apply_head(snap, &layout.head_past, &fused_past.to_owned());
    LatentDistribution { mu, sigma: sig }
}

/// Posterior head over `[fused_past || fused_future]`. Only callable during
/// training; the future is unavailable at test time.
pub fn future_encoder<'a>(
    snap: &ParameterSnapshot,
    layout: &ModelLayout,
    fused_past: ArrayView2<'a, f64>,
    fused_future: ArrayView2<'a, f64>,
    phase: Phase,
) -> Result<LatentDistribution> {
    if phase == Phase::Eval {
        return Err(CoreError::Usage(
            "future encoder is train-only; the prior head drives evaluation".into(),
        ));
    }
    if fused_past.nrows() != fused_future.nrows() {
        return Err(CoreError::Shape {
            name: "future_encoder inputs".into(),
            expected: vec![fused_past.nrows()],
            got: vec![fused_future.nrows()],
        });
    }
    let cat = ndarray::concatenate(Axis(1), &[fused_past, fused_future])
        .map_err(|e| CoreError::Usage(format!("concatenate: {e}")))?;
    let (mu, _, sig) = apply_head(snap, &layout.head_future, &cat);
    Ok(LatentDistribution { mu, sigma: sig })
}

/// Decode latent rows into past reconstructions and future predictions
/// (relativized coordinates). Row i uses `anchors_*[i]` and `fused_past` row i.
pub fn decode(
    snap: &ParameterSnapshot,
    layout: &ModelLayout,
    z: ArrayView2<'_, f64>,
    fused_past: ArrayView2<'_, f64>,
    anchors_first: &[[f64; 2]],
    anchors_last: &[[f64; 2]],
    t_obs: usize,
    t_fut: usize,
) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let mut x_hat = Vec::with_capacity(z.nrows());
    let mut y_hat = Vec::with_capacity(z.nrows());
    for i in 0..z.nrows() {
        let context = build_context(z.row(i).to_owned(), fused_past.row(i).to_owned());
        let (disp_p, _) = gru_forward(snap, &layout.dec_past, &context, t_obs);
        let (disp_f, _) = gru_forward(snap, &layout.dec_future, &context, t_fut);
        x_hat.push(displacements_to_positions(&disp_p, anchors_first[i]));
        y_hat.push(displacements_to_positions(&disp_f, anchors_last[i]));
    }
    (x_hat, y_hat)
}

fn build_context(z: Array1<f64>, fused: Array1<f64>) -> Array1<f64> {
    let mut context = Array1::zeros(z.len() + fused.len());
    context.slice_mut(s![0..z.len()]).assign(&z);
    context.slice_mut(s![z.len()..]).assign(&fused);
    context
}

/// Total loss per the training objective:
/// `mean ||Y_hat - Y||^2 + zeta * KL + eta * mean ||X_hat - X||^2`,
/// squared norms per step, averaged over rows and steps; KL averaged over
/// agents. Row lists may be longer than the target lists when the batch is
/// doubled (row `i` compares against target `i % n_agents`).
pub fn loss_total(
    y_hat: &[Array2<f64>],
    y: &[Array2<f64>],
    x_hat: &[Array2<f64>],
    x: &[Array2<f64>],
    q: &LatentDistribution,
    p: &LatentDistribution,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let n_agents = y.len();
    let n_rows = y_hat.len();
    if n_rows == 0 || n_agents == 0 || x_hat.len() != n_rows || x.len() != n_agents {
        return Err(CoreError::Usage("loss_total: empty or mismatched inputs".into()));
    }
    let t_fut = y[0].nrows();
    let t_obs = x[0].nrows();
    let doubled = n_rows == 2 * n_agents;

    let mut pred_sum = [0.0f64; 2];
    let mut recon_sum = [0.0f64; 2];
    for (row, (yh, xh)) in y_hat.iter().zip(x_hat).enumerate() {
        let a = row % n_agents;
        let half = row / n_agents;
        pred_sum[half] += sq_diff(yh, &y[a]);
        recon_sum[half] += sq_diff(xh, &x[a]);
    }
    let pred = (pred_sum[0] + pred_sum[1]) / (n_rows as f64 * t_fut as f64);
    let recon = (recon_sum[0] + recon_sum[1]) / (n_rows as f64 * t_obs as f64);

    let mut kl = 0.0;
    for ((&mq, &sq), (&mp, &sp)) in q
        .mu
        .iter()
        .zip(q.sigma.iter())
        .zip(p.mu.iter().zip(p.sigma.iter()))
    {
        kl += kl_element(mq, sq, mp, sp);
    }
    kl /= n_agents as f64;

    let halves = doubled.then(|| LossHalves {
        pred_base: pred_sum[0] / (n_agents as f64 * t_fut as f64),
        recon_base: recon_sum[0] / (n_agents as f64 * t_obs as f64),
        pred_mix: pred_sum[1] / (n_agents as f64 * t_fut as f64),
        recon_mix: recon_sum[1] / (n_agents as f64 * t_obs as f64),
    });

    Ok(LossBreakdown {
        total: pred + weights.zeta * kl + weights.eta * recon,
        pred,
        kl,
        recon,
        n_agents,
        n_rows,
        halves,
    })
}

fn sq_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Training forward pass over a prepared batch with frozen noise.
pub fn forward_train(
    snap: &ParameterSnapshot,
    layout: &ModelLayout,
    cfg: &ModelConfig,
    weights: &LossWeights,
    prepared: &[PreparedWindow],
    noise: &TrainNoise,
) -> Result<(LossBreakdown, TrainCache)> {
    if prepared.is_empty() {
        return Err(CoreError::Usage("empty batch".into()));
    }
    let d_lat = cfg.d_latent;
    let doubled = noise.mix.is_some();

    let mut caches = Vec::with_capacity(prepared.len());
    let mut mu_q_sum = Array1::<f64>::zeros(d_lat);
    let mut sig_q_sum = Array1::<f64>::zeros(d_lat);
    let mut pred_sum = [0.0f64; 2];
    let mut recon_sum = [0.0f64; 2];
    let mut kl_sum = 0.0;
    let mut total_agents = 0usize;
    let mut total_rows = 0usize;
    let t_fut = prepared[0].t_fut;
    let t_obs = prepared[0].t_obs;

    for (wi, win) in prepared.iter().enumerate() {
        let n_v = win.n_valid();
        let eps = &noise.eps[wi];
        if eps.shape() != [n_v, d_lat] {
            return Err(CoreError::Shape {
                name: format!("noise for window {wi}"),
                expected: vec![n_v, d_lat],
                got: eps.shape().to_vec(),
            });
        }
        let (fused_p_slots, enc_past) = encode_forward(snap, &layout.enc_past, cfg, &win.past)?;
        let (fused_f_slots, enc_future) =
            encode_forward(snap, &layout.enc_future, cfg, &win.future)?;
        let fused_past = select_rows(&fused_p_slots, &win.valid_slots);
        let fused_future = select_rows(&fused_f_slots, &win.valid_slots);

        let (mu_p, pre_sig_p, sig_p) = apply_head(snap, &layout.head_past, &fused_past);
        let cat = ndarray::concatenate(Axis(1), &[fused_past.view(), fused_future.view()])
            .expect("same row count");
        let (mu_q, pre_sig_q, sig_q) = apply_head(snap, &layout.head_future, &cat);

        let z_base = &mu_q + &(&sig_q * eps);
        let z_rows = match &noise.mix {
            None => z_base.clone(),
            Some(mix) => {
                let z_mix = &z_base + &(mix.z_add[wi].mapv(|v| v * (1.0 - mix.rho)));
                ndarray::concatenate(Axis(0), &[z_base.view(), z_mix.view()])
                    .expect("same col count")
            }
        };

        let mut dec_past = Vec::with_capacity(z_rows.nrows());
        let mut dec_future = Vec::with_capacity(z_rows.nrows());
        let mut x_hat = Vec::with_capacity(z_rows.nrows());
        let mut y_hat = Vec::with_capacity(z_rows.nrows());
        for row in 0..z_rows.nrows() {
            let a = row % n_v;
            let half = row / n_v;
            let context =
                build_context(z_rows.row(row).to_owned(), fused_past.row(a).to_owned());
            let (disp_p, cache_p) = gru_forward(snap, &layout.dec_past, &context, t_obs);
            let (disp_f, cache_f) = gru_forward(snap, &layout.dec_future, &context, t_fut);
            let xh = displacements_to_positions(&disp_p, win.anchors_first[a]);
            let yh = displacements_to_positions(&disp_f, win.anchors_last[a]);
            let slot = win.valid_slots[a];
            pred_sum[half] += sq_diff(&yh, &win.future.coords[slot]);
            recon_sum[half] += sq_diff(&xh, &win.past.coords[slot]);
            dec_past.push(cache_p);
            dec_future.push(cache_f);
            x_hat.push(xh);
            y_hat.push(yh);
        }

        for a in 0..n_v {
            for c in 0..d_lat {
                kl_sum += kl_element(mu_q[[a, c]], sig_q[[a, c]], mu_p[[a, c]], sig_p[[a, c]]);
                mu_q_sum[c] += mu_q[[a, c]];
                sig_q_sum[c] += sig_q[[a, c]];
            }
        }
        total_agents += n_v;
        total_rows += z_rows.nrows();

        caches.push(WindowCache {
            enc_past,
            enc_future,
            fused_past,
            cat,
            mu_p,
            pre_sig_p,
            sig_p,
            mu_q,
            pre_sig_q,
            sig_q,
            z_rows,
            dec_past,
            dec_future,
            x_hat,
            y_hat,
        });
    }

    let pred = (pred_sum[0] + pred_sum[1]) / (total_rows as f64 * t_fut as f64);
    let recon = (recon_sum[0] + recon_sum[1]) / (total_rows as f64 * t_obs as f64);
    let kl = kl_sum / total_agents as f64;
    let halves = doubled.then(|| LossHalves {
        pred_base: pred_sum[0] / (total_agents as f64 * t_fut as f64),
        recon_base: recon_sum[0] / (total_agents as f64 * t_obs as f64),
        pred_mix: pred_sum[1] / (total_agents as f64 * t_fut as f64),
        recon_mix: recon_sum[1] / (total_agents as f64 * t_obs as f64),
    });
    let breakdown = LossBreakdown {
        total: pred + weights.zeta * kl + weights.eta * recon,
        pred,
        kl,
        recon,
        n_agents: total_agents,
        n_rows: total_rows,
        halves,
    };
    let inv = 1.0 / total_agents as f64;
    Ok((
        breakdown,
        TrainCache {
            windows: caches,
            posterior_mean: (mu_q_sum * inv, sig_q_sum * inv),
        },
    ))
}

/// Backward pass of [`forward_train`]; returns gradients of the total loss.
pub fn backward_train(
    snap: &ParameterSnapshot,
    layout: &ModelLayout,
    cfg: &ModelConfig,
    weights: &LossWeights,
    prepared: &[PreparedWindow],
    noise: &TrainNoise,
    breakdown: &LossBreakdown,
    cache: &TrainCache,
) -> Result<ParameterSnapshot> {
    let mut grads = snap.zeros_like();
    let d_lat = cfg.d_latent;
    let d2 = 2 * cfg.d_model;
    let t_fut = prepared[0].t_fut;
    let t_obs = prepared[0].t_obs;
    let pred_scale = 1.0 / (breakdown.n_rows as f64 * t_fut as f64);
    let recon_scale = weights.eta / (breakdown.n_rows as f64 * t_obs as f64);
    let kl_scale = weights.zeta / breakdown.n_agents as f64;

    for (wi, win) in prepared.iter().enumerate() {
        let wc = &cache.windows[wi];
        let n_v = win.n_valid();
        let n_rows = wc.z_rows.nrows();
        let eps = &noise.eps[wi];

        let mut d_fused_past = Array2::zeros((n_v, d2));
        let mut d_z_base: Array2<f64> = Array2::zeros((n_v, d_lat));

        for row in 0..n_rows {
            let a = row % n_v;
            let slot = win.valid_slots[a];
            // d pred / d y_hat, d recon / d x_hat
            let mut d_y = wc.y_hat[row].clone();
            d_y -= &win.future.coords[slot];
            d_y.mapv_inplace(|v| 2.0 * v * pred_scale);
            let mut d_x = wc.x_hat[row].clone();
            d_x -= &win.past.coords[slot];
            d_x.mapv_inplace(|v| 2.0 * v * recon_scale);

            let d_disp_f = positions_backward(&d_y);
            let d_disp_p = positions_backward(&d_x);
            let mut d_context =
                gru_backward(snap, &layout.dec_future, &wc.dec_future[row], &d_disp_f, &mut grads);
            d_context += &gru_backward(
                snap,
                &layout.dec_past,
                &wc.dec_past[row],
                &d_disp_p,
                &mut grads,
            );

            for c in 0..d_lat {
                d_z_base[[a, c]] += d_context[c];
            }
            for c in 0..d2 {
                d_fused_past[[a, c]] += d_context[d_lat + c];
            }
        }

        // z_base = mu_q + sig_q ⊙ eps (mix rows add a constant, so their
        // gradient flows straight into z_base)
        let mut d_mu_q = d_z_base.clone();
        let mut d_sig_q = &d_z_base * eps;
        let mut d_mu_p: Array2<f64> = Array2::zeros((n_v, d_lat));
        let mut d_sig_p: Array2<f64> = Array2::zeros((n_v, d_lat));
        for a in 0..n_v {
            for c in 0..d_lat {
                let (dmq, dsq, dmp, dsp) = kl_element_backward(
                    wc.mu_q[[a, c]],
                    wc.sig_q[[a, c]],
                    wc.mu_p[[a, c]],
                    wc.sig_p[[a, c]],
                    kl_scale,
                );
                d_mu_q[[a, c]] += dmq;
                d_sig_q[[a, c]] += dsq;
                d_mu_p[[a, c]] += dmp;
                d_sig_p[[a, c]] += dsp;
            }
        }

        // sigma = softplus(pre)
        let d_pre_sig_q = &d_sig_q * &wc.pre_sig_q.mapv(sigmoid);
        let d_pre_sig_p = &d_sig_p * &wc.pre_sig_p.mapv(sigmoid);

        // past head
        grads.add2(layout.head_past.w_mu, &d_mu_p.t().dot(&wc.fused_past));
        grads.add1(layout.head_past.b_mu, &d_mu_p.sum_axis(Axis(0)));
        grads.add2(layout.head_past.w_sigma, &d_pre_sig_p.t().dot(&wc.fused_past));
        grads.add1(layout.head_past.b_sigma, &d_pre_sig_p.sum_axis(Axis(0)));
        d_fused_past += &d_mu_p.dot(&snap.m2(layout.head_past.w_mu));
        d_fused_past += &d_pre_sig_p.dot(&snap.m2(layout.head_past.w_sigma));

        // future head over [fused_past || fused_future]
        grads.add2(layout.head_future.w_mu, &d_mu_q.t().dot(&wc.cat));
        grads.add1(layout.head_future.b_mu, &d_mu_q.sum_axis(Axis(0)));
        grads.add2(layout.head_future.w_sigma, &d_pre_sig_q.t().dot(&wc.cat));
        grads.add1(layout.head_future.b_sigma, &d_pre_sig_q.sum_axis(Axis(0)));
        let d_cat =
            d_mu_q.dot(&snap.m2(layout.head_future.w_mu)) + d_pre_sig_q.dot(&snap.m2(layout.head_future.w_sigma));
        d_fused_past += &d_cat.slice(s![.., 0..d2]);
        let d_fused_future = d_cat.slice(s![.., d2..]).to_owned();

        // scatter compact gradients back to slot space and run the encoders
        let n_slots = win.past.coords.len();
        let mut d_fused_p_slots = Array2::zeros((n_slots, d2));
        let mut d_fused_f_slots = Array2::zeros((n_slots, d2));
        for (a, &slot) in win.valid_slots.iter().enumerate() {
            d_fused_p_slots.row_mut(slot).assign(&d_fused_past.row(a));
            d_fused_f_slots.row_mut(slot).assign(&d_fused_future.row(a));
        }
        encode_backward(
            d_fused_p_slots.view(),
            &wc.enc_past,
            snap,
            &layout.enc_past,
            cfg,
            &win.past,
            &mut grads,
        );
        encode_backward(
            d_fused_f_slots.view(),
            &wc.enc_future,
            snap,
            &layout.enc_future,
            cfg,
            &win.future,
            &mut grads,
        );
    }

    Ok(grads)
}

/// Convenience: forward + backward in one call.
pub fn loss_and_grad(
    snap: &ParameterSnapshot,
    layout: &ModelLayout,
    cfg: &ModelConfig,
    weights: &LossWeights,
    prepared: &[PreparedWindow],
    noise: &TrainNoise,
) -> Result<(LossBreakdown, ParameterSnapshot)> {
    let (breakdown, cache) = forward_train(snap, layout, cfg, weights, prepared, noise)?;
    let grads = backward_train(snap, layout, cfg, weights, prepared, noise, &breakdown, &cache)?;
    Ok((breakdown, grads))
}

/// One sampled trajectory set in scene coordinates, slot-indexed.
#[derive(Debug, Clone)]
pub struct PredictionOutput {
    pub x_hat: Vec<Option<Array2<f64>>>,
    pub y_hat: Vec<Option<Array2<f64>>>,
}

/// Draw K prior samples and decode them. Deterministic given `seed`;
/// outputs are de-relativized into scene coordinates.
pub fn predict_k(
    snap: &ParameterSnapshot,
    layout: &ModelLayout,
    cfg: &ModelConfig,
    window: &TrajectoryWindow,
    k: usize,
    seed: u64,
) -> Result<Vec<PredictionOutput>> {
    if k == 0 {
        return Err(CoreError::Usage("K must be >= 1".into()));
    }
    let win = prepare_window(window)?;
    let (fused_p_slots, _) = encode_forward(snap, &layout.enc_past, cfg, &win.past)?;
    let fused_past = select_rows(&fused_p_slots, &win.valid_slots);
    let (mu_p, _, sig_p) = apply_head(snap, &layout.head_past, &fused_past);
    let n_v = win.n_valid();
    let n_slots = window.agents.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outputs = Vec::with_capacity(k);
    for _ in 0..k {
        let eps = standard_noise(n_v, cfg.d_latent, &mut rng);
        let z = &mu_p + &(&sig_p * &eps);
        let (x_rel, y_rel) = decode(
            snap,
            layout,
            z.view(),
            fused_past.view(),
            &win.anchors_first,
            &win.anchors_last,
            win.t_obs,
            win.t_fut,
        );
        let mut x_hat: Vec<Option<Array2<f64>>> = vec![None; n_slots];
        let mut y_hat: Vec<Option<Array2<f64>>> = vec![None; n_slots];
        for (a, &slot) in win.valid_slots.iter().enumerate() {
            let mut xp = x_rel[a].clone();
            let mut yp = y_rel[a].clone();
            crate::data::window::derelativize_points(&mut xp, win.reference);
            crate::data::window::derelativize_points(&mut yp, win.reference);
            x_hat[slot] = Some(xp);
            y_hat[slot] = Some(yp);
        }
        outputs.push(PredictionOutput { x_hat, y_hat });
    }
    Ok(outputs)
}
