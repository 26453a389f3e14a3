//! Residual recurrent decoders: a gated recurrent cell driven by the
//! `[Z || fused]` context emits per-step displacements; positions come from
//! cumulative summation off an anchor.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cvae_head::latent::sigmoid;
use crate::params::ParameterSnapshot;

/// Slot indices of one decoder block's arrays.
#[derive(Debug, Clone)]
pub struct GruLayout {
    pub w_r: usize,
    pub w_z: usize,
    pub w_n: usize,
    pub u_r: usize,
    pub u_z: usize,
    pub u_n: usize,
    pub b_r: usize,
    pub b_z: usize,
    pub b_in: usize,
    pub b_hn: usize,
    pub w_out: usize,
    pub b_out: usize,
}

pub fn register_gru(
    snap: &mut ParameterSnapshot,
    prefix: &str,
    d_in: usize,
    d_hidden: usize,
    rng: &mut ChaCha8Rng,
) -> GruLayout {
    let xavier = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit)).into_dyn()
    };
    GruLayout {
        w_r: snap.register(format!("{prefix}.w_r"), xavier(d_hidden, d_in, rng)),
        w_z: snap.register(format!("{prefix}.w_z"), xavier(d_hidden, d_in, rng)),
        w_n: snap.register(format!("{prefix}.w_n"), xavier(d_hidden, d_in, rng)),
        u_r: snap.register(format!("{prefix}.u_r"), xavier(d_hidden, d_hidden, rng)),
        u_z: snap.register(format!("{prefix}.u_z"), xavier(d_hidden, d_hidden, rng)),
        u_n: snap.register(format!("{prefix}.u_n"), xavier(d_hidden, d_hidden, rng)),
        b_r: snap.register(format!("{prefix}.b_r"), Array1::<f64>::zeros(d_hidden).into_dyn()),
        b_z: snap.register(format!("{prefix}.b_z"), Array1::<f64>::zeros(d_hidden).into_dyn()),
        b_in: snap.register(format!("{prefix}.b_in"), Array1::<f64>::zeros(d_hidden).into_dyn()),
        b_hn: snap.register(format!("{prefix}.b_hn"), Array1::<f64>::zeros(d_hidden).into_dyn()),
        w_out: snap.register(format!("{prefix}.w_out"), xavier(2, d_hidden, rng)),
        b_out: snap.register(format!("{prefix}.b_out"), Array1::<f64>::zeros(2).into_dyn()),
    }
}

pub struct GruStepCache {
    h_prev: Array1<f64>,
    r: Array1<f64>,
    z: Array1<f64>,
    n: Array1<f64>,
    un_h: Array1<f64>,
    h: Array1<f64>,
}

pub struct GruCache {
    pub steps: Vec<GruStepCache>,
    pub context: Array1<f64>,
}

/// Unroll `t_len` steps from a constant context vector; returns per-step
/// displacements (`t_len x 2`).
pub fn gru_forward(
    snap: &ParameterSnapshot,
    l: &GruLayout,
    context: &Array1<f64>,
    t_len: usize,
) -> (Array2<f64>, GruCache) {
    let w_r = snap.m2(l.w_r);
    let w_z = snap.m2(l.w_z);
    let w_n = snap.m2(l.w_n);
    let u_r = snap.m2(l.u_r);
    let u_z = snap.m2(l.u_z);
    let u_n = snap.m2(l.u_n);
    let b_r = snap.v1(l.b_r);
    let b_z = snap.v1(l.b_z);
    let b_in = snap.v1(l.b_in);
    let b_hn = snap.v1(l.b_hn);
    let w_out = snap.m2(l.w_out);
    let b_out = snap.v1(l.b_out);
    let d_hidden = w_r.nrows();

    // Input projections of the constant context are loop-invariant.
    let wx_r = w_r.dot(context) + &b_r;
    let wx_z = w_z.dot(context) + &b_z;
    let wx_n = w_n.dot(context) + &b_in;

    let mut h = Array1::zeros(d_hidden);
    let mut disp = Array2::zeros((t_len, 2));
    let mut steps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let r = (&wx_r + &u_r.dot(&h)).mapv(sigmoid);
        let z = (&wx_z + &u_z.dot(&h)).mapv(sigmoid);
        let un_h = u_n.dot(&h) + &b_hn;
        let n = (&wx_n + &(&r * &un_h)).mapv(f64::tanh);
        let h_new = &((1.0 - &z) * &n) + &(&z * &h);
        let out = w_out.dot(&h_new) + &b_out;
        disp[[t, 0]] = out[0];
        disp[[t, 1]] = out[1];
        steps.push(GruStepCache { h_prev: h.clone(), r, z, n, un_h, h: h_new.clone() });
        h = h_new;
    }
    (disp, GruCache { steps, context: context.clone() })
}

/// Backward through the unrolled cell. `d_disp` is `t_len x 2`; the context
/// gradient is returned for the caller to split into dZ and d_fused.
pub fn gru_backward(
    snap: &ParameterSnapshot,
    l: &GruLayout,
    cache: &GruCache,
    d_disp: &Array2<f64>,
    grads: &mut ParameterSnapshot,
) -> Array1<f64> {
    let w_r = snap.m2(l.w_r);
    let w_z = snap.m2(l.w_z);
    let w_n = snap.m2(l.w_n);
    let u_r = snap.m2(l.u_r);
    let u_z = snap.m2(l.u_z);
    let u_n = snap.m2(l.u_n);
    let w_out = snap.m2(l.w_out);
    let d_hidden = w_r.nrows();
    let d_in = w_r.ncols();
    let t_len = cache.steps.len();

    let mut g_w_r = Array2::zeros((d_hidden, d_in));
    let mut g_w_z = Array2::zeros((d_hidden, d_in));
    let mut g_w_n = Array2::zeros((d_hidden, d_in));
    let mut g_u_r = Array2::zeros((d_hidden, d_hidden));
    let mut g_u_z = Array2::zeros((d_hidden, d_hidden));
    let mut g_u_n = Array2::zeros((d_hidden, d_hidden));
    let mut g_b_r = Array1::zeros(d_hidden);
    let mut g_b_z = Array1::zeros(d_hidden);
    let mut g_b_in = Array1::zeros(d_hidden);
    let mut g_b_hn = Array1::zeros(d_hidden);
    let mut g_w_out = Array2::zeros((2, d_hidden));
    let mut g_b_out = Array1::zeros(2);
    let mut d_context = Array1::zeros(d_in);

    let mut d_h = Array1::zeros(d_hidden);
    for t in (0..t_len).rev() {
        let s = &cache.steps[t];
        let d_out = Array1::from_vec(vec![d_disp[[t, 0]], d_disp[[t, 1]]]);
        // disp_t = w_out · h_t + b_out
        g_w_out += &d_out
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&s.h.view().insert_axis(ndarray::Axis(0)));
        g_b_out += &d_out;
        d_h += &w_out.t().dot(&d_out);

        // h_t = (1 - z) ⊙ n + z ⊙ h_prev
        let d_z = (&s.h_prev - &s.n) * &d_h;
        let d_n = (1.0 - &s.z) * &d_h;
        let mut d_h_prev = &s.z * &d_h;

        // n = tanh(wx_n + r ⊙ un_h)
        let d_an = (1.0 - &s.n * &s.n) * &d_n;
        let d_r = &d_an * &s.un_h;
        let d_un_h = &d_an * &s.r;
        g_w_n += &d_an
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&cache.context.view().insert_axis(ndarray::Axis(0)));
        g_b_in += &d_an;
        d_context += &w_n.t().dot(&d_an);
        g_u_n += &d_un_h
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&s.h_prev.view().insert_axis(ndarray::Axis(0)));
        g_b_hn += &d_un_h;
        d_h_prev += &u_n.t().dot(&d_un_h);

        // z = sigmoid(wx_z + u_z h_prev)
        let d_az = &s.z * &(1.0 - &s.z) * &d_z;
        g_w_z += &d_az
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&cache.context.view().insert_axis(ndarray::Axis(0)));
        g_b_z += &d_az;
        d_context += &w_z.t().dot(&d_az);
        g_u_z += &d_az
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&s.h_prev.view().insert_axis(ndarray::Axis(0)));
        d_h_prev += &u_z.t().dot(&d_az);

        // r = sigmoid(wx_r + u_r h_prev)
        let d_ar = &s.r * &(1.0 - &s.r) * &d_r;
        g_w_r += &d_ar
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&cache.context.view().insert_axis(ndarray::Axis(0)));
        g_b_r += &d_ar;
        d_context += &w_r.t().dot(&d_ar);
        g_u_r += &d_ar
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&s.h_prev.view().insert_axis(ndarray::Axis(0)));
        d_h_prev += &u_r.t().dot(&d_ar);

        d_h = d_h_prev;
    }

    grads.add2(l.w_r, &g_w_r);
    grads.add2(l.w_z, &g_w_z);
    grads.add2(l.w_n, &g_w_n);
    grads.add2(l.u_r, &g_u_r);
    grads.add2(l.u_z, &g_u_z);
    grads.add2(l.u_n, &g_u_n);
    grads.add1(l.b_r, &g_b_r);
    grads.add1(l.b_z, &g_b_z);
    grads.add1(l.b_in, &g_b_in);
    grads.add1(l.b_hn, &g_b_hn);
    grads.add2(l.w_out, &g_w_out);
    grads.add1(l.b_out, &g_b_out);
    d_context
}

/// Positions from displacements: `pos_t = anchor + Σ_{u<=t} disp_u`.
pub fn displacements_to_positions(disp: &Array2<f64>, anchor: [f64; 2]) -> Array2<f64> {
    let mut out = Array2::zeros(disp.raw_dim());
    let mut acc = anchor;
    for t in 0..disp.nrows() {
        acc[0] += disp[[t, 0]];
        acc[1] += disp[[t, 1]];
        out[[t, 0]] = acc[0];
        out[[t, 1]] = acc[1];
    }
    out
}

/// Backward of the cumulative sum: `d_disp_u = Σ_{t>=u} d_pos_t`.
pub fn positions_backward(d_pos: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(d_pos.raw_dim());
    let mut acc = [0.0f64; 2];
    for t in (0..d_pos.nrows()).rev() {
        acc[0] += d_pos[[t, 0]];
        acc[1] += d_pos[[t, 1]];
        out[[t, 0]] = acc[0];
        out[[t, 1]] = acc[1];
    }
    out
}
