//! Forward pass with a recorded trace, and reverse-mode gradients.

use alloc::vec;
use alloc::vec::Vec;

use super::{PolicyError, PolicyParams};
use crate::sim::Observation;
use crate::Action;

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

/// Activations of one encoder block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub z_in: Vec<f64>,
    pub h1: Vec<f64>,
    pub rstd1: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// `heads x n x n`, row-stochastic.
    pub attn: Vec<f64>,
    pub ctx: Vec<f64>,
    pub z_mid: Vec<f64>,
    pub h2: Vec<f64>,
    pub rstd2: Vec<f64>,
    pub u: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub n: usize,
    pub input: Vec<f64>,
    /// Rows that may be attended to.
    pub key_mask: Vec<bool>,
    pub layers: Vec<LayerTrace>,
    pub z_out: Vec<f64>,
    /// Ego row after the last block.
    pub context: Vec<f64>,
    pub logits: [f64; Action::COUNT],
    pub probs: [f64; Action::COUNT],
    pub value: f64,
}

impl ForwardTrace {
    /// Attention weights of block `layer`, head `head`, as `n x n`.
    pub fn attention(&self, layer: usize, head: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.layers[layer].attn[head * nn..(head + 1) * nn]
    }
}

/// `out = x w` for `x: n x i`, `w: i x o`.
fn matmul(x: &[f64], n: usize, w: &[f64], i: usize, o: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|y| *y = 0.0);
    for r in 0..n {
        let row = &mut out[r * o..(r + 1) * o];
        for (a, &xa) in x[r * i..(r + 1) * i].iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            for (y, &wv) in row.iter_mut().zip(&w[a * o..(a + 1) * o]) {
                *y += xa * wv;
            }
        }
    }
}

fn add_bias(out: &mut [f64], b: &[f64]) {
    for row in out.chunks_mut(b.len()) {
        for (y, bv) in row.iter_mut().zip(b) {
            *y += bv;
        }
    }
}

/// Accumulate `dw += x^T dy` and, if given, `dx += dy w^T`.
fn matmul_backward(
    x: &[f64],
    n: usize,
    w: &[f64],
    i: usize,
    o: usize,
    dy: &[f64],
    dw: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    for r in 0..n {
        let dyr = &dy[r * o..(r + 1) * o];
        if dyr.iter().all(|&d| d == 0.0) {
            continue;
        }
        for (a, &xa) in x[r * i..(r + 1) * i].iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            for (g, &d) in dw[a * o..(a + 1) * o].iter_mut().zip(dyr) {
                *g += xa * d;
            }
        }
    }
    if let Some(dx) = dx {
        for r in 0..n {
            let dyr = &dy[r * o..(r + 1) * o];
            if dyr.iter().all(|&d| d == 0.0) {
                continue;
            }
            for a in 0..i {
                let wr = &w[a * o..(a + 1) * o];
                dx[r * i + a] += wr.iter().zip(dyr).map(|(p, q)| p * q).sum::<f64>();
            }
        }
    }
}

fn bias_backward(dy: &[f64], db: &mut [f64]) {
    for row in dy.chunks(db.len()) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
}

/// Parameter-free layer norm over rows of width `d`.
fn layer_norm(x: &[f64], d: usize, out: &mut [f64], rstd: &mut [f64]) {
    for ((xr, yr), s) in x.chunks(d).zip(out.chunks_mut(d)).zip(rstd.iter_mut()) {
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        *s = 1.0 / libm::sqrt(var + LN_EPS);
        for (y, v) in yr.iter_mut().zip(xr) {
            *y = (v - mean) * *s;
        }
    }
}

/// `dx += dLN(y)/dx^T dy`.
fn layer_norm_backward(y: &[f64], rstd: &[f64], dy: &[f64], d: usize, dx: &mut [f64]) {
    for (((yr, dyr), s), dxr) in y.chunks(d).zip(dy.chunks(d)).zip(rstd).zip(dx.chunks_mut(d)) {
        let mean_dy = dyr.iter().sum::<f64>() / d as f64;
        let mean_dyy = dyr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for ((g, &dyv), &yv) in dxr.iter_mut().zip(dyr).zip(yr) {
            *g += s * (dyv - mean_dy - yv * mean_dyy);
        }
    }
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + libm::tanh(GELU_K * (u + GELU_C * u * u * u)))
}

fn gelu_grad(u: f64) -> f64 {
    let t = libm::tanh(GELU_K * (u + GELU_C * u * u * u));
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * u * u)
}

/// Numerically stable softmax restricted to `allowed`; excluded entries get 0.
pub fn masked_softmax(logits: &[f64; Action::COUNT], allowed: &[bool; Action::COUNT]) -> [f64; Action::COUNT] {
    let max = logits.iter().zip(allowed).filter(|(_, &a)| a).map(|(&l, _)| l).fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; Action::COUNT];
    if max == f64::NEG_INFINITY {
        return p;
    }
    for k in 0..Action::COUNT {
        if allowed[k] {
            p[k] = libm::exp(logits[k] - max);
        }
    }
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    p
}

pub fn softmax(logits: &[f64; Action::COUNT]) -> [f64; Action::COUNT] {
    masked_softmax(logits, &[true; Action::COUNT])
}

/// Forward pass over `n` rows of `d_in` features (row 0 is the ego).
/// Rows whose last feature (presence) is zero are excluded as keys.
pub fn forward_rows(params: &PolicyParams, input: &[f64], n: usize) -> Result<ForwardTrace, PolicyError> {
    let dims = params.dims();
    let (d_in, d, f, heads, hd) = (dims.d_in, dims.d_model, dims.ffn_dim(), dims.heads, dims.head_dim());
    if n == 0 || input.len() != n * d_in {
        return Err(PolicyError::ShapeMismatch { expected: n.max(1) * d_in, got: input.len() });
    }
    let lay = &params.layout;
    let key_mask: Vec<bool> = (0..n).map(|r| r == 0 || input[r * d_in + d_in - 1] != 0.0).collect();

    let mut z = vec![0.0; n * d];
    matmul(input, n, params.slice(lay.embed_w), d_in, d, &mut z);
    add_bias(&mut z, params.slice(lay.embed_b));

    let scale = 1.0 / libm::sqrt(hd as f64);
    let mut layers = Vec::with_capacity(dims.layers);
    for s in &lay.layers {
        let z_in = z.clone();
        let mut h1 = vec![0.0; n * d];
        let mut rstd1 = vec![0.0; n];
        layer_norm(&z_in, d, &mut h1, &mut rstd1);
        let mut q = vec![0.0; n * d];
        let mut k = vec![0.0; n * d];
        let mut v = vec![0.0; n * d];
        matmul(&h1, n, params.slice(s.wq), d, d, &mut q);
        matmul(&h1, n, params.slice(s.wk), d, d, &mut k);
        matmul(&h1, n, params.slice(s.wv), d, d, &mut v);

        let mut attn = vec![0.0; heads * n * n];
        let mut ctx = vec![0.0; n * d];
        for h in 0..heads {
            let cols = h * hd..(h + 1) * hd;
            for i in 0..n {
                let row = &mut attn[(h * n + i) * n..(h * n + i + 1) * n];
                let qi = &q[i * d + cols.start..i * d + cols.end];
                let mut max = f64::NEG_INFINITY;
                for j in 0..n {
                    if key_mask[j] {
                        let kj = &k[j * d + cols.start..j * d + cols.end];
                        row[j] = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                        max = max.max(row[j]);
                    }
                }
                let mut sum = 0.0;
                for j in 0..n {
                    row[j] = if key_mask[j] { libm::exp(row[j] - max) } else { 0.0 };
                    sum += row[j];
                }
                for j in 0..n {
                    row[j] /= sum;
                    if row[j] != 0.0 {
                        let a = row[j];
                        for c in cols.clone() {
                            ctx[i * d + c] += a * v[j * d + c];
                        }
                    }
                }
            }
        }
        let mut z_mid = vec![0.0; n * d];
        matmul(&ctx, n, params.slice(s.wo), d, d, &mut z_mid);
        for (m, zi) in z_mid.iter_mut().zip(&z_in) {
            *m += zi;
        }

        let mut h2 = vec![0.0; n * d];
        let mut rstd2 = vec![0.0; n];
        layer_norm(&z_mid, d, &mut h2, &mut rstd2);
        let mut u = vec![0.0; n * f];
        matmul(&h2, n, params.slice(s.w1), d, f, &mut u);
        add_bias(&mut u, params.slice(s.b1));
        let g: Vec<f64> = u.iter().map(|&x| gelu(x)).collect();
        let mut z_out = vec![0.0; n * d];
        matmul(&g, n, params.slice(s.w2), f, d, &mut z_out);
        add_bias(&mut z_out, params.slice(s.b2));
        for (o, m) in z_out.iter_mut().zip(&z_mid) {
            *o += m;
        }
        z = z_out;
        layers.push(LayerTrace { z_in, h1, rstd1, q, k, v, attn, ctx, z_mid, h2, rstd2, u, g });
    }

    let context = z[..d].to_vec();
    let mut logits = [0.0; Action::COUNT];
    matmul(&context, 1, params.slice(lay.pi_w), d, Action::COUNT, &mut logits);
    add_bias(&mut logits, params.slice(lay.pi_b));
    let mut value = [0.0];
    matmul(&context, 1, params.slice(lay.v_w), d, 1, &mut value);
    add_bias(&mut value, params.slice(lay.v_b));
    let probs = softmax(&logits);
    Ok(ForwardTrace { n, input: input.to_vec(), key_mask, layers, z_out: z, context, logits, probs, value: value[0] })
}

pub fn forward(params: &PolicyParams, obs: &Observation) -> Result<ForwardTrace, PolicyError> {
    forward_rows(params, &obs.flat(), obs.rows.len())
}

/// Accumulate into `grads` the gradient of a scalar loss whose partial
/// derivatives w.r.t. the logits and the value are `dlogits` and `dvalue`.
pub fn backward(
    params: &PolicyParams,
    trace: &ForwardTrace,
    dlogits: &[f64; Action::COUNT],
    dvalue: f64,
    grads: &mut PolicyParams,
) {
    let dims = params.dims();
    let (d_in, d, f, heads, hd, n) = (dims.d_in, dims.d_model, dims.ffn_dim(), dims.heads, dims.head_dim(), trace.n);
    let lay = &params.layout;

    let mut dctx0 = vec![0.0; d];
    matmul_backward(
        &trace.context,
        1,
        params.slice(lay.pi_w),
        d,
        Action::COUNT,
        dlogits,
        grads.slice_mut(lay.pi_w),
        Some(&mut dctx0),
    );
    bias_backward(dlogits, grads.slice_mut(lay.pi_b));
    matmul_backward(
        &trace.context,
        1,
        params.slice(lay.v_w),
        d,
        1,
        &[dvalue],
        grads.slice_mut(lay.v_w),
        Some(&mut dctx0),
    );
    bias_backward(&[dvalue], grads.slice_mut(lay.v_b));

    let mut dz = vec![0.0; n * d];
    dz[..d].copy_from_slice(&dctx0);
    let scale = 1.0 / libm::sqrt(hd as f64);

    for (s, t) in lay.layers.iter().zip(&trace.layers).rev() {
        // feed-forward half
        let mut dg = vec![0.0; n * f];
        matmul_backward(&t.g, n, params.slice(s.w2), f, d, &dz, grads.slice_mut(s.w2), Some(&mut dg));
        bias_backward(&dz, grads.slice_mut(s.b2));
        let du: Vec<f64> = dg.iter().zip(&t.u).map(|(g, &u)| g * gelu_grad(u)).collect();
        let mut dh2 = vec![0.0; n * d];
        matmul_backward(&t.h2, n, params.slice(s.w1), d, f, &du, grads.slice_mut(s.w1), Some(&mut dh2));
        bias_backward(&du, grads.slice_mut(s.b1));
        let mut dz_mid = dz;
        layer_norm_backward(&t.h2, &t.rstd2, &dh2, d, &mut dz_mid);

        // attention half
        let mut dctx = vec![0.0; n * d];
        matmul_backward(&t.ctx, n, params.slice(s.wo), d, d, &dz_mid, grads.slice_mut(s.wo), Some(&mut dctx));
        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        let mut da = vec![0.0; n];
        for h in 0..heads {
            let c0 = h * hd;
            for i in 0..n {
                let arow = &t.attn[(h * n + i) * n..(h * n + i + 1) * n];
                let dci = &dctx[i * d + c0..i * d + c0 + hd];
                if dci.iter().all(|&x| x == 0.0) {
                    continue;
                }
                for j in 0..n {
                    let vj = &t.v[j * d + c0..j * d + c0 + hd];
                    da[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                    if arow[j] != 0.0 {
                        for c in 0..hd {
                            dv[j * d + c0 + c] += arow[j] * dci[c];
                        }
                    }
                }
                let dot: f64 = arow.iter().zip(&da).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    let ds = arow[j] * (da[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in 0..hd {
                        dq[i * d + c0 + c] += ds * t.k[j * d + c0 + c];
                        dk[j * d + c0 + c] += ds * t.q[i * d + c0 + c];
                    }
                }
            }
        }
        let mut dh1 = vec![0.0; n * d];
        matmul_backward(&t.h1, n, params.slice(s.wq), d, d, &dq, grads.slice_mut(s.wq), Some(&mut dh1));
        matmul_backward(&t.h1, n, params.slice(s.wk), d, d, &dk, grads.slice_mut(s.wk), Some(&mut dh1));
        matmul_backward(&t.h1, n, params.slice(s.wv), d, d, &dv, grads.slice_mut(s.wv), Some(&mut dh1));
        let mut dz_in = dz_mid;
        layer_norm_backward(&t.h1, &t.rstd1, &dh1, d, &mut dz_in);
        dz = dz_in;
    }

    matmul_backward(&trace.input, n, params.slice(lay.embed_w), d_in, d, &dz, grads.slice_mut(lay.embed_w), None);
    bias_backward(&dz, grads.slice_mut(lay.embed_b));
}
