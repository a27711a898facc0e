//! Incremental decoding with per-layer key/value caches, plus greedy and
//! beam search on top of it. The arithmetic mirrors the graph path row by
//! row, so a cached step reproduces the teacher-forced logits.

use std::cmp::Ordering;

use super::layers::LN_EPS;
use super::{ActivationHistory, Seq2Seq, BOS_ID, EOS_ID};
use crate::error::Result;
use crate::numeric::kernels::{gelu, log_softmax_rows, mm, mm_nt, softmax_rows};
use crate::numeric::{ParamStore, Session, Tensor};

struct AttnWeights {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    o: Tensor,
    o_b: Tensor,
}

struct LayerWeights {
    ln1: (Tensor, Tensor),
    self_attn: AttnWeights,
    ln2: (Tensor, Tensor),
    cross: AttnWeights,
    ln3: (Tensor, Tensor),
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

/// Encoded input plus everything needed to run decoder steps for it.
pub struct Decoder<'m> {
    model: &'m Seq2Seq,
    tok: Tensor,
    pos: Tensor,
    layers: Vec<LayerWeights>,
    ln_f: (Tensor, Tensor),
    head_w: Tensor,
    head_b: Tensor,
    /// Projected encoder memory per layer (cross-attention keys/values).
    cross_k: Vec<Vec<f64>>,
    cross_v: Vec<Vec<f64>>,
    /// Decoder-stack prefix rows per layer.
    prefix_k: Vec<Vec<f64>>,
    prefix_v: Vec<Vec<f64>>,
}

/// Self-attention cache of one hypothesis.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pos: usize,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl DecoderState {
    /// Number of tokens fed so far.
    pub fn position(&self) -> usize {
        self.pos
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated ids without `<bos>` or `<eos>`.
    pub tokens: Vec<usize>,
    /// Sum of token log-probabilities, including `<eos>` when finished.
    pub score: f64,
    pub finished: bool,
}

fn get(params: &ParamStore, name: &str) -> Result<Tensor> {
    Ok(params
        .get(name)
        .cloned()
        .ok_or_else(|| crate::numeric::NumericError::MissingParam(name.to_string()))?)
}

fn ln_pair(params: &ParamStore, name: &str) -> Result<(Tensor, Tensor)> {
    Ok((get(params, &format!("{}/g", name))?, get(params, &format!("{}/b", name))?))
}

fn attn_weights(params: &ParamStore, name: &str) -> Result<AttnWeights> {
    Ok(AttnWeights {
        q: get(params, &format!("{}/q", name))?,
        k: get(params, &format!("{}/k", name))?,
        v: get(params, &format!("{}/v", name))?,
        o: get(params, &format!("{}/o", name))?,
        o_b: get(params, &format!("{}/o_b", name))?,
    })
}

fn layer_norm(x: &[f64], (g, b): &(Tensor, Tensor)) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    x.iter()
        .zip(g.data().iter().zip(b.data()))
        .map(|(v, (g, b))| (v - mean) * rstd * g + b)
        .collect()
}

/// Row-vector times matrix.
fn vm(x: &[f64], w: &Tensor) -> Vec<f64> {
    mm(x, w.data(), 1, w.rows(), w.cols())
}

fn add_in_place(x: &mut [f64], y: &[f64]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

/// One query row against `rows` cached key/value rows, per head.
fn attend_row(q: &[f64], k: &[f64], v: &[f64], n_heads: usize) -> Vec<f64> {
    let d = q.len();
    let dh = d / n_heads;
    let rows = k.len() / d;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Vec::with_capacity(d);
    let mut kh = vec![0.0; rows * dh];
    let mut vh = vec![0.0; rows * dh];
    for h in 0..n_heads {
        for r in 0..rows {
            kh[r * dh..(r + 1) * dh].copy_from_slice(&k[r * d + h * dh..r * d + (h + 1) * dh]);
            vh[r * dh..(r + 1) * dh].copy_from_slice(&v[r * d + h * dh..r * d + (h + 1) * dh]);
        }
        let scores: Vec<f64> = mm_nt(&q[h * dh..(h + 1) * dh], &kh, 1, dh, rows)
            .into_iter()
            .map(|s| s * scale)
            .collect();
        let p = softmax_rows(&scores, rows);
        out.extend(mm(&p, &vh, 1, rows, dh));
    }
    out
}

fn attention_out(a: &[f64], w: &AttnWeights) -> Vec<f64> {
    let mut o = vm(a, &w.o);
    add_in_place(&mut o, w.o_b.data());
    o
}

impl<'m> Decoder<'m> {
    /// Encodes `x_ids` (cut to `max_len`) and prepares cross-attention memory.
    pub fn new(
        model: &'m Seq2Seq,
        params: &ParamStore,
        x_ids: &[usize],
        prefix: Option<&ActivationHistory>,
    ) -> Result<Self> {
        let c = &model.config;
        let prefix = prefix.filter(|p| p.len > 0);
        let enc = {
            let mut s = Session::frozen(params);
            let pv = prefix.map(|p| p.to_vars(&mut s.graph));
            let x_ids = model.clip(x_ids, c.max_len);
            let e = model.encode(&mut s, x_ids, pv.as_ref())?;
            s.graph.value(e).clone()
        };
        let mut layers = Vec::with_capacity(c.n_layers);
        let mut cross_k = Vec::with_capacity(c.n_layers);
        let mut cross_v = Vec::with_capacity(c.n_layers);
        for l in 0..c.n_layers {
            let name = format!("phi/dec/{}", l);
            let w = LayerWeights {
                ln1: ln_pair(params, &format!("{}/ln1", name))?,
                self_attn: attn_weights(params, &format!("{}/self", name))?,
                ln2: ln_pair(params, &format!("{}/ln2", name))?,
                cross: attn_weights(params, &format!("{}/cross", name))?,
                ln3: ln_pair(params, &format!("{}/ln3", name))?,
                w1: get(params, &format!("{}/ff/w1", name))?,
                b1: get(params, &format!("{}/ff/b1", name))?,
                w2: get(params, &format!("{}/ff/w2", name))?,
                b2: get(params, &format!("{}/ff/b2", name))?,
            };
            let n = enc.rows();
            let mut k = mm(enc.data(), w.cross.k.data(), n, c.d_model, c.d_model);
            let mut v = mm(enc.data(), w.cross.v.data(), n, c.d_model, c.d_model);
            if let Some(p) = prefix.filter(|_| c.prefix_cross_attention) {
                k.splice(0..0, p.enc[l].0.data().iter().copied());
                v.splice(0..0, p.enc[l].1.data().iter().copied());
            }
            cross_k.push(k);
            cross_v.push(v);
            layers.push(w);
        }
        let (prefix_k, prefix_v) = match prefix {
            Some(p) => p.dec.iter().map(|(k, v)| (k.data().to_vec(), v.data().to_vec())).unzip(),
            None => (vec![Vec::new(); c.n_layers], vec![Vec::new(); c.n_layers]),
        };
        Ok(Self {
            model,
            tok: get(params, "phi/emb/tok")?,
            pos: get(params, "phi/emb/dec_pos")?,
            layers,
            ln_f: ln_pair(params, "phi/dec/ln_f")?,
            head_w: get(params, "phi/head/w")?,
            head_b: get(params, "phi/head/b")?,
            cross_k,
            cross_v,
            prefix_k,
            prefix_v,
        })
    }

    pub fn start(&self) -> DecoderState {
        DecoderState {
            pos: 0,
            k: self.prefix_k.clone(),
            v: self.prefix_v.clone(),
        }
    }

    /// Feeds `token` at the next position and returns log-probabilities of
    /// the following token.
    pub fn step(&self, st: &mut DecoderState, token: usize) -> Vec<f64> {
        let c = &self.model.config;
        let d = c.d_model;
        assert!(st.pos < c.max_len, "decoder position {} exceeds max_len", st.pos);
        let mut x = self.tok.row_slice(token).to_vec();
        add_in_place(&mut x, self.pos.row_slice(st.pos));
        for (l, w) in self.layers.iter().enumerate() {
            let h = layer_norm(&x, &w.ln1);
            let q = vm(&h, &w.self_attn.q);
            st.k[l].extend(vm(&h, &w.self_attn.k));
            st.v[l].extend(vm(&h, &w.self_attn.v));
            let a = attend_row(&q, &st.k[l], &st.v[l], c.n_heads);
            add_in_place(&mut x, &attention_out(&a, &w.self_attn));

            let h = layer_norm(&x, &w.ln2);
            let q = vm(&h, &w.cross.q);
            let a = attend_row(&q, &self.cross_k[l], &self.cross_v[l], c.n_heads);
            add_in_place(&mut x, &attention_out(&a, &w.cross));

            let h = layer_norm(&x, &w.ln3);
            let mut f = vm(&h, &w.w1);
            add_in_place(&mut f, w.b1.data());
            let f: Vec<f64> = f.into_iter().map(gelu).collect();
            let mut f = vm(&f, &w.w2);
            add_in_place(&mut f, w.b2.data());
            add_in_place(&mut x, &f);
        }
        st.pos += 1;
        let h = layer_norm(&x, &self.ln_f);
        let z = vm(&h, &self.head_w);
        let mut logits = mm_nt(&z, self.tok.data(), 1, d, c.vocab_size);
        add_in_place(&mut logits, self.head_b.data());
        log_softmax_rows(&logits, c.vocab_size)
    }

    /// Log-probabilities of the token following `y_prefix` (which starts
    /// with `<bos>`).
    pub fn next_token_logprobs(&self, y_prefix: &[usize]) -> Vec<f64> {
        assert!(!y_prefix.is_empty(), "decoder prefix must start with <bos>");
        let mut st = self.start();
        let mut out = Vec::new();
        for &t in y_prefix {
            out = self.step(&mut st, t);
        }
        out
    }

    fn max_steps(&self, max_steps: usize) -> usize {
        max_steps.min(self.model.config.max_len)
    }
}

/// Index of the largest value, lowest index on ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_decode(dec: &Decoder, max_steps: usize) -> Vec<usize> {
    assert!(max_steps >= 1, "max_steps must be at least 1");
    let mut st = dec.start();
    let mut out = Vec::new();
    let mut last = BOS_ID;
    for _ in 0..dec.max_steps(max_steps) {
        let lp = dec.step(&mut st, last);
        let next = argmax(&lp);
        if next == EOS_ID {
            break;
        }
        out.push(next);
        last = next;
    }
    out
}

/// Higher score first; equal scores by lexicographically smaller tokens.
fn rank(a_score: f64, a_tokens: &[usize], b_score: f64, b_tokens: &[usize]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_tokens.cmp(b_tokens))
}

struct Alive {
    tokens: Vec<usize>,
    score: f64,
    state: DecoderState,
}

/// Length-unnormalized beam search. Each step ranks all one-token
/// extensions of the live beam; `<eos>` extensions ranked within the top
/// `beam` become finished, and the best `beam` others stay live. Search
/// stops once the best finished score beats every live score (scores only
/// decrease), or after `max_steps` tokens.
pub fn beam_search(dec: &Decoder, beam: usize, max_steps: usize) -> Hypothesis {
    assert!(beam >= 1, "beam must be at least 1");
    assert!(max_steps >= 1, "max_steps must be at least 1");
    let mut alive = vec![Alive {
        tokens: Vec::new(),
        score: 0.0,
        state: dec.start(),
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..dec.max_steps(max_steps) {
        // (parent, token, score)
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        for (i, a) in alive.iter_mut().enumerate() {
            let last = a.tokens.last().copied().unwrap_or(BOS_ID);
            let lp = dec.step(&mut a.state, last);
            cands.extend(lp.iter().enumerate().map(|(t, &l)| (i, t, a.score + l)));
        }
        let seq = |(p, t, _): &(usize, usize, f64)| {
            let mut s = alive[*p].tokens.clone();
            s.push(*t);
            s
        };
        cands.sort_by(|x, y| {
            y.2.total_cmp(&x.2)
                .then_with(|| alive[x.0].tokens.cmp(&alive[y.0].tokens))
                .then_with(|| x.1.cmp(&y.1))
        });
        let mut next = Vec::with_capacity(beam);
        for (r, c) in cands.iter().enumerate() {
            if c.1 == EOS_ID {
                if r < beam {
                    finished.push(Hypothesis {
                        tokens: alive[c.0].tokens.clone(),
                        score: c.2,
                        finished: true,
                    });
                }
            } else if next.len() < beam {
                next.push(Alive {
                    tokens: seq(c),
                    score: c.2,
                    state: alive[c.0].state.clone(),
                });
            }
            if r + 1 >= beam && next.len() >= beam {
                break;
            }
        }
        alive = next;
        let best_alive = alive.iter().map(|a| a.score).fold(f64::NEG_INFINITY, f64::max);
        let best_finished = finished.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        if alive.is_empty() || best_finished > best_alive {
            break;
        }
    }
    finished.sort_by(|a, b| rank(a.score, &a.tokens, b.score, &b.tokens));
    if let Some(best) = finished.into_iter().next() {
        return best;
    }
    alive.sort_by(|a, b| rank(a.score, &a.tokens, b.score, &b.tokens));
    let a = alive.into_iter().next().expect("beam keeps at least one hypothesis");
    Hypothesis {
        tokens: a.tokens,
        score: a.score,
        finished: false,
    }
}
