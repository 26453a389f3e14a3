//! The dual-path encoder: embedding, the TI and IT pathways, and their
//! concatenation into the fused per-agent feature.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::scene::AgentType;
use crate::dual_tt::attention::{
    temporal_backward, temporal_forward, TemporalCache, TemporalGrads, TemporalViews,
};
use crate::dual_tt::config::ModelConfig;
use crate::dual_tt::graph::{build_relation_graph, RelationGraph};
use crate::dual_tt::relation::{
    interacted_backward, interacted_forward, InteractedCache, InteractionGrads, InteractionViews,
};
use crate::error::{CoreError, Result};
use crate::params::ParameterSnapshot;

const LN_EPS: f64 = 1e-5;

/// Slot indices of one pathway's arrays inside a [`ParameterSnapshot`].
#[derive(Debug, Clone)]
pub struct PathwayLayout {
    pub w_q: usize,
    pub w_k: usize,
    pub w_v: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub rel_w: Vec<usize>,
    pub rel_b: Vec<usize>,
    pub rel_a: Vec<usize>,
    pub fuse_q: usize,
    pub fuse_w: usize,
    pub fuse_b: usize,
    pub ln_g: usize,
    pub ln_b: usize,
}

/// Slot indices of one encoder (embedding plus two pathways).
#[derive(Debug, Clone)]
pub struct EncoderLayout {
    pub embed_w: usize,
    pub embed_b: usize,
    pub ti: PathwayLayout,
    pub it: PathwayLayout,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

fn register_pathway(
    snap: &mut ParameterSnapshot,
    prefix: &str,
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> PathwayLayout {
    let d = cfg.d_model;
    let n_rel = cfg.relation_types();
    let d_head_r = d / cfg.n_heads_relation;
    let w_q = snap.register(format!("{prefix}.tmp.w_q"), xavier(rng, d, d).into_dyn());
    let w_k = snap.register(format!("{prefix}.tmp.w_k"), xavier(rng, d, d).into_dyn());
    let w_v = snap.register(format!("{prefix}.tmp.w_v"), xavier(rng, d, d).into_dyn());
    let w_o = snap.register(format!("{prefix}.tmp.w_o"), xavier(rng, d, d).into_dyn());
    let b_o = snap.register(format!("{prefix}.tmp.b_o"), Array1::<f64>::zeros(d).into_dyn());
    let mut rel_w = Vec::new();
    let mut rel_b = Vec::new();
    let mut rel_a = Vec::new();
    for r in 0..n_rel {
        rel_w.push(snap.register(format!("{prefix}.rel{r}.w"), xavier(rng, d, d).into_dyn()));
        rel_b.push(snap.register(format!("{prefix}.rel{r}.b"), Array1::<f64>::zeros(d).into_dyn()));
        rel_a.push(snap.register(
            format!("{prefix}.rel{r}.a"),
            xavier(rng, cfg.n_heads_relation, 2 * d_head_r).into_dyn(),
        ));
    }
    let fuse_q = snap.register(format!("{prefix}.fuse.q"), xavier(rng, d, 1).column(0).to_owned().into_dyn());
    let fuse_w = snap.register(format!("{prefix}.fuse.w"), xavier(rng, d, d).into_dyn());
    let fuse_b = snap.register(format!("{prefix}.fuse.b"), Array1::<f64>::zeros(d).into_dyn());
    let ln_g = snap.register(format!("{prefix}.ln.g"), Array1::<f64>::ones(d).into_dyn());
    let ln_b = snap.register(format!("{prefix}.ln.b"), Array1::<f64>::zeros(d).into_dyn());
    PathwayLayout {
        w_q,
        w_k,
        w_v,
        w_o,
        b_o,
        rel_w,
        rel_b,
        rel_a,
        fuse_q,
        fuse_w,
        fuse_b,
        ln_g,
        ln_b,
    }
}

/// Register one encoder's arrays. With `cfg.shared_pathways` the IT pathway
/// aliases the TI arrays.
pub fn register_encoder(
    snap: &mut ParameterSnapshot,
    prefix: &str,
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> EncoderLayout {
    let d = cfg.d_model;
    let embed_w = snap.register(format!("{prefix}.embed.w"), xavier(rng, d, 2).into_dyn());
    let embed_b = snap.register(format!("{prefix}.embed.b"), Array1::<f64>::zeros(d).into_dyn());
    let ti = register_pathway(snap, &format!("{prefix}.ti"), cfg, rng);
    let it = if cfg.shared_pathways {
        ti.clone()
    } else {
        register_pathway(snap, &format!("{prefix}.it"), cfg, rng)
    };
    EncoderLayout { embed_w, embed_b, ti, it }
}

fn temporal_views<'a>(
    snap: &'a ParameterSnapshot,
    pl: &PathwayLayout,
    cfg: &ModelConfig,
) -> TemporalViews<'a> {
    TemporalViews {
        w_q: snap.m2(pl.w_q),
        w_k: snap.m2(pl.w_k),
        w_v: snap.m2(pl.w_v),
        w_o: snap.m2(pl.w_o),
        b_o: snap.v1(pl.b_o),
        n_heads: cfg.n_heads_temporal,
    }
}

fn interaction_views<'a>(
    snap: &'a ParameterSnapshot,
    pl: &PathwayLayout,
    cfg: &ModelConfig,
) -> InteractionViews<'a> {
    InteractionViews {
        w_node: pl.rel_w.iter().map(|&i| snap.m2(i)).collect(),
        b_node: pl.rel_b.iter().map(|&i| snap.v1(i)).collect(),
        attn: pl.rel_a.iter().map(|&i| snap.m2(i)).collect(),
        fuse_q: snap.v1(pl.fuse_q),
        fuse_w: snap.m2(pl.fuse_w),
        fuse_b: snap.v1(pl.fuse_b),
        n_heads: cfg.n_heads_relation,
        activation: cfg.activation,
    }
}

/// Sinusoidal positional encoding, `t_len x d`.
pub fn positional_encoding(t_len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((t_len, d), |(t, j)| {
        let pair = (j / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * pair / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Per-step affine embedding with tanh, plus additive positional encoding.
pub fn embed_positions(
    coords: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    b: ArrayView1<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Numeric("non-finite coordinate input".into()));
    }
    let pre = coords.dot(&w.t()) + &b;
    let tanh_val = pre.mapv(f64::tanh);
    let pe = positional_encoding(coords.nrows(), w.nrows());
    Ok((&tanh_val + &pe, tanh_val))
}

/// Temporal mining over one agent's embedded sequence: the attended sequence
/// and its last-step summary.
pub fn temporal_mine(
    embeddings: ArrayView2<'_, f64>,
    snap: &ParameterSnapshot,
    pl: &PathwayLayout,
    cfg: &ModelConfig,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let views = temporal_views(snap, pl, cfg);
    let (seq, _) = temporal_forward(embeddings, &views)?;
    let h_t = seq.row(seq.nrows() - 1).to_owned();
    Ok((h_t, seq))
}

struct LnCache {
    xhat: Array1<f64>,
    inv_std: f64,
}

fn layer_norm_fwd(
    x: ArrayView1<'_, f64>,
    g: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
) -> (Array1<f64>, LnCache) {
    let d = x.len() as f64;
    let mean = x.sum() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let xhat = x.mapv(|v| (v - mean) * inv_std);
    let y = &xhat * &g + &b;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_bwd(
    dy: ArrayView1<'_, f64>,
    cache: &LnCache,
    g: ArrayView1<'_, f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
    dx: &mut Array1<f64>,
) {
    let d = dy.len() as f64;
    *dg += &(&dy * &cache.xhat);
    *db += &dy;
    let dxhat = &dy * &g;
    let mean_dxhat = dxhat.sum() / d;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum() / d;
    for i in 0..dy.len() {
        dx[i] += cache.inv_std * (dxhat[i] - mean_dxhat - cache.xhat[i] * mean_dxhat_xhat);
    }
}

/// Inputs to one encoder pass: per-slot coordinate sequences (`T x 2`),
/// validity, and agent types. Invalid slots are ignored everywhere.
#[derive(Debug, Clone)]
pub struct EncoderInput {
    pub coords: Vec<Array2<f64>>,
    pub valid: Vec<bool>,
    pub types: Vec<AgentType>,
}

impl EncoderInput {
    pub fn n_slots(&self) -> usize {
        self.coords.len()
    }

    pub fn t_len(&self) -> usize {
        self.coords.first().map(|c| c.nrows()).unwrap_or(0)
    }

    fn positions_at(&self, t: usize) -> Vec<[f64; 2]> {
        self.coords
            .iter()
            .map(|c| [c[[t, 0]], c[[t, 1]]])
            .collect()
    }

    /// Relation graphs for every timestep.
    pub fn graphs(&self, cfg: &ModelConfig) -> Result<Vec<RelationGraph>> {
        (0..self.t_len())
            .map(|t| build_relation_graph(&self.positions_at(t), &self.valid, &self.types, cfg))
            .collect()
    }
}

struct PathwayTiCache {
    temporal: Vec<Option<TemporalCache>>,
    inter: InteractedCache,
    ln: Vec<Option<LnCache>>,
}

struct PathwayItCache {
    inter: Vec<InteractedCache>,
    temporal: Vec<Option<TemporalCache>>,
    ln: Vec<Option<LnCache>>,
}

pub struct EncodeCache {
    tanh_emb: Vec<Option<Array2<f64>>>,
    ti: PathwayTiCache,
    it: PathwayItCache,
    pub graphs: Vec<RelationGraph>,
}

/// β/γ weights recorded during interacted mining, for inspection and tests.
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    pub beta: Vec<BetaRecord>,
    pub gamma: Vec<GammaRecord>,
}

#[derive(Debug, Clone)]
pub struct BetaRecord {
    pub relation: usize,
    pub head: usize,
    pub node: usize,
    pub neighbors: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GammaRecord {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

pub fn attention_record(cache: &InteractedCache, n_heads: usize) -> AttentionRecord {
    let mut beta = Vec::new();
    for (r, nodes) in cache.beta.iter().enumerate() {
        for (i, rec) in nodes.iter().enumerate() {
            let Some(rec) = rec else { continue };
            for h in 0..n_heads {
                beta.push(BetaRecord {
                    relation: r,
                    head: h,
                    node: i,
                    neighbors: rec.neighbors.clone(),
                    weights: rec.weights.row(h).to_vec(),
                });
            }
        }
    }
    let gamma = cache
        .components
        .iter()
        .zip(&cache.gamma)
        .map(|(nodes, weights)| GammaRecord { nodes: nodes.clone(), weights: weights.clone() })
        .collect();
    AttentionRecord { beta, gamma }
}

/// Full encoder forward: returns fused features (`n x 2d`, invalid rows zero)
/// and the cache for [`encode_backward`].
pub fn encode_forward(
    snap: &ParameterSnapshot,
    layout: &EncoderLayout,
    cfg: &ModelConfig,
    input: &EncoderInput,
) -> Result<(Array2<f64>, EncodeCache)> {
    let n = input.n_slots();
    let t_len = input.t_len();
    let d = cfg.d_model;
    if n == 0 || !input.valid.iter().any(|&v| v) {
        return Err(CoreError::Usage("encoder input has no valid agents".into()));
    }
    if t_len == 0 {
        return Err(CoreError::Usage("encoder input has zero timesteps".into()));
    }

    let graphs = input.graphs(cfg)?;
    let w_e = snap.m2(layout.embed_w);
    let b_e = snap.v1(layout.embed_b);

    let mut emb: Vec<Option<Array2<f64>>> = vec![None; n];
    let mut tanh_emb: Vec<Option<Array2<f64>>> = vec![None; n];
    for i in 0..n {
        if !input.valid[i] {
            continue;
        }
        let (e, tanh_val) = embed_positions(input.coords[i].view(), w_e, b_e)?;
        emb[i] = Some(e);
        tanh_emb[i] = Some(tanh_val);
    }

    // TI: temporal per agent, then one interacted pass at the last frame.
    let ti_views_t = temporal_views(snap, &layout.ti, cfg);
    let ti_views_i = interaction_views(snap, &layout.ti, cfg);
    let mut ti_temporal: Vec<Option<TemporalCache>> = (0..n).map(|_| None).collect();
    let mut h_t = Array2::zeros((n, d));
    for i in 0..n {
        if !input.valid[i] {
            continue;
        }
        let (seq, cache) = temporal_forward(emb[i].as_ref().unwrap().view(), &ti_views_t)?;
        h_t.row_mut(i).assign(&seq.row(t_len - 1));
        ti_temporal[i] = Some(cache);
    }
    let (ti_hr, ti_inter) =
        interacted_forward(h_t.view(), &graphs[t_len - 1], &input.valid, &ti_views_i);
    let mut ti_ln: Vec<Option<LnCache>> = (0..n).map(|_| None).collect();
    let mut ti_out = Array2::zeros((n, d));
    for i in 0..n {
        if !input.valid[i] {
            continue;
        }
        let (y, c) = layer_norm_fwd(
            ti_hr.row(i),
            snap.v1(layout.ti.ln_g),
            snap.v1(layout.ti.ln_b),
        );
        ti_out.row_mut(i).assign(&y);
        ti_ln[i] = Some(c);
    }

    // IT: interacted per timestep, then temporal over the resulting sequence.
    let it_views_t = temporal_views(snap, &layout.it, cfg);
    let it_views_i = interaction_views(snap, &layout.it, cfg);
    let mut it_inter = Vec::with_capacity(t_len);
    let mut seqs: Vec<Array2<f64>> = vec![Array2::zeros((t_len, d)); n];
    for (t, graph) in graphs.iter().enumerate() {
        let mut features = Array2::zeros((n, d));
        for i in 0..n {
            if let Some(e) = &emb[i] {
                features.row_mut(i).assign(&e.row(t));
            }
        }
        let (z, cache) = interacted_forward(features.view(), graph, &input.valid, &it_views_i);
        for i in 0..n {
            if input.valid[i] {
                seqs[i].row_mut(t).assign(&z.row(i));
            }
        }
        it_inter.push(cache);
    }
    let mut it_temporal: Vec<Option<TemporalCache>> = (0..n).map(|_| None).collect();
    let mut it_ln: Vec<Option<LnCache>> = (0..n).map(|_| None).collect();
    let mut it_out = Array2::zeros((n, d));
    for i in 0..n {
        if !input.valid[i] {
            continue;
        }
        let (seq, cache) = temporal_forward(seqs[i].view(), &it_views_t)?;
        let (y, c) = layer_norm_fwd(
            seq.row(t_len - 1),
            snap.v1(layout.it.ln_g),
            snap.v1(layout.it.ln_b),
        );
        it_out.row_mut(i).assign(&y);
        it_temporal[i] = Some(cache);
        it_ln[i] = Some(c);
    }

    let mut fused = Array2::zeros((n, 2 * d));
    for i in 0..n {
        if !input.valid[i] {
            continue;
        }
        for c in 0..d {
            fused[[i, c]] = ti_out[[i, c]];
            fused[[i, d + c]] = it_out[[i, c]];
        }
    }

    Ok((
        fused,
        EncodeCache {
            tanh_emb,
            ti: PathwayTiCache { temporal: ti_temporal, inter: ti_inter, ln: ti_ln },
            it: PathwayItCache { inter: it_inter, temporal: it_temporal, ln: it_ln },
            graphs,
        },
    ))
}

/// Backward through the full encoder. `d_fused` is `n x 2d`; gradients are
/// accumulated into `grads` (same layout as the snapshot).
pub fn encode_backward(
    d_fused: ArrayView2<'_, f64>,
    cache: &EncodeCache,
    snap: &ParameterSnapshot,
    layout: &EncoderLayout,
    cfg: &ModelConfig,
    input: &EncoderInput,
    grads: &mut ParameterSnapshot,
) {
    let n = input.n_slots();
    let t_len = input.t_len();
    let d = cfg.d_model;
    let n_rel = cfg.relation_types();
    let d_f = d;

    let mut d_emb: Vec<Array2<f64>> = vec![Array2::zeros((t_len, d)); n];

    // --- TI pathway ---
    {
        let views_t = temporal_views(snap, &layout.ti, cfg);
        let views_i = interaction_views(snap, &layout.ti, cfg);
        let mut dg_ln = Array1::zeros(d);
        let mut db_ln = Array1::zeros(d);
        let mut d_hr = Array2::zeros((n, d));
        for i in 0..n {
            if !input.valid[i] {
                continue;
            }
            let dy = d_fused.row(i).slice(ndarray::s![0..d]).to_owned();
            let mut dx = Array1::zeros(d);
            layer_norm_bwd(
                dy.view(),
                cache.ti.ln[i].as_ref().unwrap(),
                snap.v1(layout.ti.ln_g),
                &mut dg_ln,
                &mut db_ln,
                &mut dx,
            );
            d_hr.row_mut(i).assign(&dx);
        }
        grads.add1(layout.ti.ln_g, &dg_ln);
        grads.add1(layout.ti.ln_b, &db_ln);

        let mut ig = InteractionGrads::zeros(n_rel, d, d_f, cfg.n_heads_relation);
        let mut d_ht = Array2::zeros((n, d));
        interacted_backward(d_hr.view(), &cache.ti.inter, &input.valid, &views_i, &mut ig, &mut d_ht);
        accumulate_interaction(grads, &layout.ti, &ig);

        let mut tg = TemporalGrads::zeros(d);
        for i in 0..n {
            if !input.valid[i] {
                continue;
            }
            let mut d_seq = Array2::zeros((t_len, d));
            d_seq.row_mut(t_len - 1).assign(&d_ht.row(i));
            temporal_backward(
                d_seq.view(),
                cache.ti.temporal[i].as_ref().unwrap(),
                &views_t,
                &mut tg,
                &mut d_emb[i],
            );
        }
        accumulate_temporal(grads, &layout.ti, &tg);
    }

    // --- IT pathway ---
    {
        let views_t = temporal_views(snap, &layout.it, cfg);
        let views_i = interaction_views(snap, &layout.it, cfg);
        let mut dg_ln = Array1::zeros(d);
        let mut db_ln = Array1::zeros(d);
        let mut tg = TemporalGrads::zeros(d);
        let mut d_z: Vec<Array2<f64>> = vec![Array2::zeros((n, d)); t_len];
        for i in 0..n {
            if !input.valid[i] {
                continue;
            }
            let dy = d_fused.row(i).slice(ndarray::s![d..2 * d]).to_owned();
            let mut dx = Array1::zeros(d);
            layer_norm_bwd(
                dy.view(),
                cache.it.ln[i].as_ref().unwrap(),
                snap.v1(layout.it.ln_g),
                &mut dg_ln,
                &mut db_ln,
                &mut dx,
            );
            let mut d_seq_out = Array2::zeros((t_len, d));
            d_seq_out.row_mut(t_len - 1).assign(&dx);
            let mut d_seq_in = Array2::zeros((t_len, d));
            temporal_backward(
                d_seq_out.view(),
                cache.it.temporal[i].as_ref().unwrap(),
                &views_t,
                &mut tg,
                &mut d_seq_in,
            );
            for t in 0..t_len {
                for c in 0..d {
                    d_z[t][[i, c]] += d_seq_in[[t, c]];
                }
            }
        }
        grads.add1(layout.it.ln_g, &dg_ln);
        grads.add1(layout.it.ln_b, &db_ln);
        accumulate_temporal(grads, &layout.it, &tg);

        let mut ig = InteractionGrads::zeros(n_rel, d, d_f, cfg.n_heads_relation);
        for t in (0..t_len).rev() {
            let mut d_features = Array2::zeros((n, d));
            interacted_backward(
                d_z[t].view(),
                &cache.it.inter[t],
                &input.valid,
                &views_i,
                &mut ig,
                &mut d_features,
            );
            for i in 0..n {
                if input.valid[i] {
                    for c in 0..d {
                        d_emb[i][[t, c]] += d_features[[i, c]];
                    }
                }
            }
        }
        accumulate_interaction(grads, &layout.it, &ig);
    }

    // --- embedding ---
    let mut dw_e = Array2::zeros((d, 2));
    let mut db_e = Array1::zeros(d);
    for i in 0..n {
        if !input.valid[i] {
            continue;
        }
        let tanh_val = cache.tanh_emb[i].as_ref().unwrap();
        // emb = tanh(pre) + PE, so d_pre = d_emb ⊙ (1 - tanh²)
        let d_pre = &d_emb[i] * &tanh_val.mapv(|v| 1.0 - v * v);
        dw_e += &d_pre.t().dot(&input.coords[i]);
        db_e += &d_pre.sum_axis(ndarray::Axis(0));
    }
    grads.add2(layout.embed_w, &dw_e);
    grads.add1(layout.embed_b, &db_e);
}

fn accumulate_temporal(grads: &mut ParameterSnapshot, pl: &PathwayLayout, tg: &TemporalGrads) {
    grads.add2(pl.w_q, &tg.w_q);
    grads.add2(pl.w_k, &tg.w_k);
    grads.add2(pl.w_v, &tg.w_v);
    grads.add2(pl.w_o, &tg.w_o);
    grads.add1(pl.b_o, &tg.b_o);
}

fn accumulate_interaction(grads: &mut ParameterSnapshot, pl: &PathwayLayout, ig: &InteractionGrads) {
    for (r, &idx) in pl.rel_w.iter().enumerate() {
        grads.add2(idx, &ig.w_node[r]);
    }
    for (r, &idx) in pl.rel_b.iter().enumerate() {
        grads.add1(idx, &ig.b_node[r]);
    }
    for (r, &idx) in pl.rel_a.iter().enumerate() {
        grads.add2(idx, &ig.attn[r]);
    }
    grads.add1(pl.fuse_q, &ig.fuse_q);
    grads.add2(pl.fuse_w, &ig.fuse_w);
    grads.add1(pl.fuse_b, &ig.fuse_b);
}

/// TI pathway as a standalone operation (temporal then interacted).
pub fn pathway_ti(
    snap: &ParameterSnapshot,
    layout: &EncoderLayout,
    cfg: &ModelConfig,
    input: &EncoderInput,
) -> Result<Array2<f64>> {
    let (fused, _) = encode_forward(snap, layout, cfg, input)?;
    Ok(fused.slice(ndarray::s![.., 0..cfg.d_model]).to_owned())
}

/// IT pathway as a standalone operation (interacted per step then temporal).
pub fn pathway_it(
    snap: &ParameterSnapshot,
    layout: &EncoderLayout,
    cfg: &ModelConfig,
    input: &EncoderInput,
) -> Result<Array2<f64>> {
    let (fused, _) = encode_forward(snap, layout, cfg, input)?;
    Ok(fused.slice(ndarray::s![.., cfg.d_model..]).to_owned())
}

/// Fused embedding `[TI || IT]` per agent.
pub fn encode(
    snap: &ParameterSnapshot,
    layout: &EncoderLayout,
    cfg: &ModelConfig,
    input: &EncoderInput,
) -> Result<Array2<f64>> {
    encode_forward(snap, layout, cfg, input).map(|(fused, _)| fused)
}

/// As [`encode`], additionally returning every interacted-mining attention
/// record (TI's single pass first, then IT's per-timestep passes).
pub fn encode_with_records(
    snap: &ParameterSnapshot,
    layout: &EncoderLayout,
    cfg: &ModelConfig,
    input: &EncoderInput,
) -> Result<(Array2<f64>, Vec<AttentionRecord>)> {
    let (fused, cache) = encode_forward(snap, layout, cfg, input)?;
    let mut records = vec![attention_record(&cache.ti.inter, cfg.n_heads_relation)];
    for c in &cache.it.inter {
        records.push(attention_record(c, cfg.n_heads_relation));
    }
    Ok((fused, records))
}
