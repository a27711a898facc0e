//! Transformer building blocks on the autodiff graph, addressed by
//! parameter-name prefix so several networks can share them.

use rand::Rng;

use crate::numeric::{OpResult, ParamStore, Session, Tensor, Var};

pub const LN_EPS: f64 = 1e-5;

pub fn linear(s: &mut Session, x: Var, w: &str, b: Option<&str>) -> OpResult {
    let wv = s.param(w)?;
    let y = s.graph.matmul(x, wv)?;
    match b {
        Some(b) => {
            let bv = s.param(b)?;
            s.graph.add_bias(y, bv)
        }
        None => Ok(y),
    }
}

pub fn layer_norm(s: &mut Session, x: Var, name: &str) -> OpResult {
    let g = s.param(&format!("{}/g", name))?;
    let b = s.param(&format!("{}/b", name))?;
    s.graph.layernorm(x, g, b, LN_EPS)
}

/// Multi-head scaled dot-product attention. `q` is `[n, d]`, `k`/`v` are
/// `[m, d]`; `mask` (if any) is an additive `[n, m]` constant.
pub fn attend(s: &mut Session, q: Var, k: Var, v: Var, n_heads: usize, mask: Option<Var>) -> OpResult {
    let d = s.graph.value(q).cols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let g = &mut s.graph;
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        let scores = g.matmul_nt(qh, kh)?;
        let mut scores = g.scale(scores, scale)?;
        if let Some(m) = mask {
            scores = g.add(scores, m)?;
        }
        let p = g.softmax(scores)?;
        heads.push(g.matmul(p, vh)?);
    }
    if n_heads == 1 {
        Ok(heads[0])
    } else {
        s.graph.concat_cols(&heads)
    }
}

/// Attention block: projections of `x` (queries) and `mem` (keys/values),
/// optional key/value rows prepended to the projected memory, output
/// projection with bias.
pub fn attention_block(
    s: &mut Session,
    name: &str,
    x: Var,
    mem: Var,
    kv_prefix: Option<(Var, Var)>,
    n_heads: usize,
    mask: Option<Var>,
) -> OpResult {
    let q = linear(s, x, &format!("{}/q", name), None)?;
    let mut k = linear(s, mem, &format!("{}/k", name), None)?;
    let mut v = linear(s, mem, &format!("{}/v", name), None)?;
    if let Some((pk, pv)) = kv_prefix {
        k = s.graph.concat_rows(&[pk, k])?;
        v = s.graph.concat_rows(&[pv, v])?;
    }
    let a = attend(s, q, k, v, n_heads, mask)?;
    linear(s, a, &format!("{}/o", name), Some(&format!("{}/o_b", name)))
}

pub fn feed_forward(s: &mut Session, name: &str, x: Var) -> OpResult {
    let h = linear(s, x, &format!("{}/w1", name), Some(&format!("{}/b1", name)))?;
    let h = s.graph.gelu(h)?;
    linear(s, h, &format!("{}/w2", name), Some(&format!("{}/b2", name)))
}

/// Pre-norm encoder layer: self-attention then feed-forward, both residual.
pub fn encoder_layer(s: &mut Session, name: &str, x: Var, kv_prefix: Option<(Var, Var)>, n_heads: usize) -> OpResult {
    let h = layer_norm(s, x, &format!("{}/ln1", name))?;
    let a = attention_block(s, &format!("{}/attn", name), h, h, kv_prefix, n_heads, None)?;
    let x = s.graph.add(x, a)?;
    let h = layer_norm(s, x, &format!("{}/ln2", name))?;
    let f = feed_forward(s, &format!("{}/ff", name), h)?;
    s.graph.add(x, f)
}

pub fn init_linear(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) {
    store.init_normal(name, &[d_in, d_out], 1.0 / (d_in as f64).sqrt(), rng);
}

pub fn init_layer_norm(store: &mut ParamStore, name: &str, d: usize) {
    store.init_const(&format!("{}/g", name), &[d], 1.0);
    store.init_const(&format!("{}/b", name), &[d], 0.0);
}

pub fn init_attention(store: &mut ParamStore, name: &str, d: usize, rng: &mut impl Rng) {
    for p in ["q", "k", "v", "o"] {
        init_linear(store, &format!("{}/{}", name, p), d, d, rng);
    }
    store.init_const(&format!("{}/o_b", name), &[d], 0.0);
}

pub fn init_feed_forward(store: &mut ParamStore, name: &str, d: usize, d_ff: usize, rng: &mut impl Rng) {
    init_linear(store, &format!("{}/w1", name), d, d_ff, rng);
    store.init_const(&format!("{}/b1", name), &[d_ff], 0.0);
    init_linear(store, &format!("{}/w2", name), d_ff, d, rng);
    store.init_const(&format!("{}/b2", name), &[d], 0.0);
}

pub fn init_encoder_layer(store: &mut ParamStore, name: &str, d: usize, d_ff: usize, rng: &mut impl Rng) {
    init_layer_norm(store, &format!("{}/ln1", name), d);
    init_attention(store, &format!("{}/attn", name), d, rng);
    init_layer_norm(store, &format!("{}/ln2", name), d);
    init_feed_forward(store, &format!("{}/ff", name), d, d_ff, rng);
}

/// `[n, L + n]` additive mask: prefix columns always visible, token columns
/// visible up to and including the query position.
pub fn causal_mask(n: usize, prefix_len: usize) -> Tensor {
    let m = prefix_len + n;
    let mut data = vec![0.0; n * m];
    for i in 0..n {
        for j in prefix_len + i + 1..m {
            data[i * m + j] = f64::NEG_INFINITY;
        }
    }
    Tensor::new(vec![n, m], data).expect("mask shape")
}
