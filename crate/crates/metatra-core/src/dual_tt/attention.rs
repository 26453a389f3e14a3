//! Temporal mining: bidirectional multi-head self-attention over one agent's
//! feature sequence, with a hand-written backward pass.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{CoreError, Result};

/// Views over the five temporal-attention arrays.
#[derive(Clone, Copy)]
pub struct TemporalViews<'a> {
    pub w_q: ArrayView2<'a, f64>,
    pub w_k: ArrayView2<'a, f64>,
    pub w_v: ArrayView2<'a, f64>,
    pub w_o: ArrayView2<'a, f64>,
    pub b_o: ArrayView1<'a, f64>,
    pub n_heads: usize,
}

/// Gradients mirroring [`TemporalViews`].
pub struct TemporalGrads {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
}

impl TemporalGrads {
    pub fn zeros(d: usize) -> Self {
        TemporalGrads {
            w_q: Array2::zeros((d, d)),
            w_k: Array2::zeros((d, d)),
            w_v: Array2::zeros((d, d)),
            w_o: Array2::zeros((d, d)),
            b_o: Array1::zeros(d),
        }
    }
}

pub struct TemporalCache {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Row-softmax attention per head, each `T x T`.
    pub attn: Vec<Array2<f64>>,
    /// Concatenated per-head context, `T x d`.
    pub concat: Array2<f64>,
    pub input: Array2<f64>,
}

/// Softmax over a slice, in place. Numerically shifted by the max.
pub fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Backward of softmax given outputs `y` and upstream `dy`: `dx = y ⊙ (dy − y·dy)`.
pub fn softmax_backward(y: &[f64], dy: &[f64], dx: &mut [f64]) {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    for i in 0..y.len() {
        dx[i] = y[i] * (dy[i] - dot);
    }
}

/// Forward pass. `input` is `T x d`; returns the attended sequence (`T x d`)
/// and a cache for [`temporal_backward`].
pub fn temporal_forward(
    input: ArrayView2<'_, f64>,
    p: &TemporalViews<'_>,
) -> Result<(Array2<f64>, TemporalCache)> {
    let t_len = input.nrows();
    let d = input.ncols();
    if t_len == 0 {
        return Err(CoreError::Usage(
            "temporal attention requires at least one unmasked step".into(),
        ));
    }
    let d_head = d / p.n_heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    let q = input.dot(&p.w_q.t());
    let k = input.dot(&p.w_k.t());
    let v = input.dot(&p.w_v.t());

    let mut attn = Vec::with_capacity(p.n_heads);
    let mut concat = Array2::zeros((t_len, d));
    for h in 0..p.n_heads {
        let cols = s![.., h * d_head..(h + 1) * d_head];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut scores = qh.dot(&kh.t());
        scores.mapv_inplace(|x| x * scale);
        for mut row in scores.rows_mut() {
            softmax_inplace(row.as_slice_mut().expect("contiguous row"));
        }
        let ctx = scores.dot(&vh);
        concat.slice_mut(cols).assign(&ctx);
        attn.push(scores);
    }
    let out = concat.dot(&p.w_o.t()) + &p.b_o;
    Ok((
        out,
        TemporalCache { q, k, v, attn, concat, input: input.to_owned() },
    ))
}

/// Backward pass. Accumulates parameter gradients into `g` and input
/// gradients into `d_input`.
pub fn temporal_backward(
    d_out: ArrayView2<'_, f64>,
    cache: &TemporalCache,
    p: &TemporalViews<'_>,
    g: &mut TemporalGrads,
    d_input: &mut Array2<f64>,
) {
    let t_len = cache.input.nrows();
    let d = cache.input.ncols();
    let d_head = d / p.n_heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    // out = concat · w_oᵀ + b_o
    g.w_o += &d_out.t().dot(&cache.concat);
    g.b_o += &d_out.sum_axis(Axis(0));
    let d_concat = d_out.dot(&p.w_o);

    let mut dq = Array2::zeros((t_len, d));
    let mut dk = Array2::zeros((t_len, d));
    let mut dv = Array2::zeros((t_len, d));
    for h in 0..p.n_heads {
        let cols = s![.., h * d_head..(h + 1) * d_head];
        let a = &cache.attn[h];
        let vh = cache.v.slice(cols);
        let d_ctx = d_concat.slice(cols);

        // ctx = A · V
        let d_a = d_ctx.dot(&vh.t());
        dv.slice_mut(cols).assign(&a.t().dot(&d_ctx));

        // softmax backward row by row, then scores = scale · Q Kᵀ
        let mut d_scores = Array2::zeros((t_len, t_len));
        let mut buf = vec![0.0; t_len];
        for t in 0..t_len {
            softmax_backward(
                a.row(t).as_slice().expect("contiguous"),
                d_a.row(t).as_slice().expect("contiguous"),
                &mut buf,
            );
            for (j, &val) in buf.iter().enumerate() {
                d_scores[[t, j]] = val * scale;
            }
        }
        let qh = cache.q.slice(cols);
        let kh = cache.k.slice(cols);
        dq.slice_mut(cols).assign(&d_scores.dot(&kh));
        dk.slice_mut(cols).assign(&d_scores.t().dot(&qh));
    }

    // Q = input · w_qᵀ (and likewise K, V)
    g.w_q += &dq.t().dot(&cache.input);
    g.w_k += &dk.t().dot(&cache.input);
    g.w_v += &dv.t().dot(&cache.input);
    *d_input += &dq.dot(&p.w_q);
    *d_input += &dk.dot(&p.w_k);
    *d_input += &dv.dot(&p.w_v);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_views(
        d: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>, Array1<f64>, usize) {
        let mut mat = |r: usize, c: usize, rng: &mut ChaCha8Rng| {
            Array2::from_shape_fn((r, c), |_| rng.gen_range(-0.8..0.8))
        };
        (
            mat(d, d, rng),
            mat(d, d, rng),
            mat(d, d, rng),
            mat(d, d, rng),
            Array1::from_shape_fn(d, |_| rng.gen_range(-0.5..0.5)),
            heads,
        )
    }

    #[test]
    fn singleton_sequence_attention_weight_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (wq, wk, wv, wo, bo, heads) = random_views(4, 2, &mut rng);
        let p = TemporalViews {
            w_q: wq.view(),
            w_k: wk.view(),
            w_v: wv.view(),
            w_o: wo.view(),
            b_o: bo.view(),
            n_heads: heads,
        };
        let input = array![[0.3, -0.2, 0.5, 0.1]];
        let (out, cache) = temporal_forward(input.view(), &p).unwrap();
        for a in &cache.attn {
            assert_eq!(a[[0, 0]], 1.0);
        }
        // output equals value/mix projection of the single embedding
        let v = input.dot(&wv.t());
        let expected = v.dot(&wo.t()) + &bo;
        for (a, b) in out.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_embeddings_give_uniform_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (wq, wk, wv, wo, bo, heads) = random_views(4, 2, &mut rng);
        let p = TemporalViews {
            w_q: wq.view(),
            w_k: wk.view(),
            w_v: wv.view(),
            w_o: wo.view(),
            b_o: bo.view(),
            n_heads: heads,
        };
        let t_len = 5;
        let input = Array2::from_shape_fn((t_len, 4), |(_, c)| 0.1 * (c as f64 + 1.0));
        let (_, cache) = temporal_forward(input.view(), &p).unwrap();
        for a in &cache.attn {
            for w in a.iter() {
                assert!((w - 1.0 / t_len as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rows_of_attention_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (wq, wk, wv, wo, bo, heads) = random_views(8, 4, &mut rng);
        let p = TemporalViews {
            w_q: wq.view(),
            w_k: wk.view(),
            w_v: wv.view(),
            w_o: wo.view(),
            b_o: bo.view(),
            n_heads: heads,
        };
        let input = Array2::from_shape_fn((6, 8), |_| rng.gen_range(-1.0..1.0));
        let (_, cache) = temporal_forward(input.view(), &p).unwrap();
        for a in &cache.attn {
            for row in a.rows() {
                let sum: f64 = row.sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn hand_computed_single_head_case() {
        // d=1, single head: q=2x, k=x, v=3x, wo=1, bo=0
        let p_wq = array![[2.0]];
        let p_wk = array![[1.0]];
        let p_wv = array![[3.0]];
        let p_wo = array![[1.0]];
        let p_bo = array![0.0];
        let p = TemporalViews {
            w_q: p_wq.view(),
            w_k: p_wk.view(),
            w_v: p_wv.view(),
            w_o: p_wo.view(),
            b_o: p_bo.view(),
            n_heads: 1,
        };
        let input = array![[1.0], [2.0]];
        // scores row0: [2*1*1, 2*1*2] = [2,4]; softmax = [e2, e4]/(e2+e4)
        let (out, _) = temporal_forward(input.view(), &p).unwrap();
        let w = (4.0f64).exp() / ((2.0f64).exp() + (4.0f64).exp());
        let expected0 = (1.0 - w) * 3.0 + w * 6.0;
        assert!((out[[0, 0]] - expected0).abs() < 1e-12);
    }

    /// Central finite differences against the analytic backward.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 4;
        let heads = 2;
        let (mut wq, wk, wv, wo, bo, _) = random_views(d, heads, &mut rng);
        let input = Array2::from_shape_fn((5, d), |_| rng.gen_range(-1.0..1.0));
        let readout = Array2::from_shape_fn((5, d), |_| rng.gen_range(-1.0..1.0));

        let loss = |wq: &Array2<f64>, input: &Array2<f64>| -> f64 {
            let p = TemporalViews {
                w_q: wq.view(),
                w_k: wk.view(),
                w_v: wv.view(),
                w_o: wo.view(),
                b_o: bo.view(),
                n_heads: heads,
            };
            let (out, _) = temporal_forward(input.view(), &p).unwrap();
            (&out * &readout).sum()
        };

        let p = TemporalViews {
            w_q: wq.view(),
            w_k: wk.view(),
            w_v: wv.view(),
            w_o: wo.view(),
            b_o: bo.view(),
            n_heads: heads,
        };
        let (_, cache) = temporal_forward(input.view(), &p).unwrap();
        let mut g = TemporalGrads::zeros(d);
        let mut d_input = Array2::zeros((5, d));
        temporal_backward(readout.view(), &cache, &p, &mut g, &mut d_input);

        let eps = 1e-6;
        for idx in [(0, 0), (1, 2), (3, 3)] {
            let orig = wq[idx];
            wq[idx] = orig + eps;
            let up = loss(&wq, &input);
            wq[idx] = orig - eps;
            let down = loss(&wq, &input);
            wq[idx] = orig;
            let fd = (up - down) / (2.0 * eps);
            assert!(
                (fd - g.w_q[idx]).abs() / fd.abs().max(1e-8) < 1e-5,
                "w_q{idx:?}: fd={fd} analytic={}",
                g.w_q[idx]
            );
        }
        let mut input2 = input.clone();
        for idx in [(0, 0), (2, 3), (4, 1)] {
            let orig = input2[idx];
            input2[idx] = orig + eps;
            let up = loss(&wq, &input2);
            input2[idx] = orig - eps;
            let down = loss(&wq, &input2);
            input2[idx] = orig;
            let fd = (up - down) / (2.0 * eps);
            assert!(
                (fd - d_input[idx]).abs() / fd.abs().max(1e-8) < 1e-5,
                "input{idx:?}: fd={fd} analytic={}",
                d_input[idx]
            );
        }
    }
}
