//! Small encoder-decoder transformer with key/value prefixes on the encoder
//! and decoder self-attention.

mod infer;
pub mod layers;
mod vocab;

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Graph, OpResult, ParamStore, Session, Tensor, Var};
use layers::{attention_block, causal_mask, encoder_layer, feed_forward, layer_norm, linear};

pub use infer::{beam_search, greedy_decode, Decoder, DecoderState, Hypothesis};
pub use vocab::{Vocab, BOS_ID, EOS_ID, PAD_ID, RESERVED, UNK_ID};

/// Namespace of language-model parameters.
pub const PHI: &str = "phi/";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    /// Also prepend the encoder-stack prefix to decoder cross-attention.
    #[serde(default)]
    pub prefix_cross_attention: bool,
}

impl ModelConfig {
    /// Desk-scale shape used by the toy pipeline.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_len: 80,
            prefix_cross_attention: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.vocab_size, self.d_model, self.n_layers, self.n_heads, self.d_ff, self.max_len];
        if dims.contains(&0) {
            return Err(Error::Contract(format!("model dimensions must be positive: {:?}", self)));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Contract(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    /// Width of one prefix row: keys and values for every layer.
    pub fn prefix_width(&self) -> usize {
        2 * self.n_layers * self.d_model
    }
}

/// Prefix key/value rows per layer for each stack, as graph nodes.
#[derive(Debug, Clone)]
pub struct PrefixVars {
    pub len: usize,
    pub enc: Vec<(Var, Var)>,
    pub dec: Vec<(Var, Var)>,
}

/// Prefix key/value rows per layer for each stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationHistory {
    pub len: usize,
    pub enc: Vec<(Tensor, Tensor)>,
    pub dec: Vec<(Tensor, Tensor)>,
}

fn split_layers(g: &mut Graph, rows: Var, n_layers: usize, d: usize) -> Result<Vec<(Var, Var)>> {
    let mut out = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let k = g.slice_cols(rows, 2 * l * d, d)?;
        let v = g.slice_cols(rows, (2 * l + 1) * d, d)?;
        out.push((k, v));
    }
    Ok(out)
}

impl PrefixVars {
    /// Splits `[L, 2·n_layers·d]` rows laid out per layer as `[key | value]`.
    pub fn from_rows(g: &mut Graph, enc_rows: Var, dec_rows: Var, config: &ModelConfig) -> Result<Self> {
        let len = g.value(enc_rows).rows();
        Ok(Self {
            len,
            enc: split_layers(g, enc_rows, config.n_layers, config.d_model)?,
            dec: split_layers(g, dec_rows, config.n_layers, config.d_model)?,
        })
    }
}

fn split_tensor(rows: &Tensor, n_layers: usize, d: usize) -> Vec<(Tensor, Tensor)> {
    let l_rows = rows.rows();
    let width = rows.cols();
    let take = |off: usize| {
        let mut data = Vec::with_capacity(l_rows * d);
        for t in 0..l_rows {
            data.extend_from_slice(&rows.data()[t * width + off..t * width + off + d]);
        }
        Tensor::new(vec![l_rows, d], data).expect("slice shape")
    };
    (0..n_layers).map(|l| (take(2 * l * d), take((2 * l + 1) * d))).collect()
}

fn join_layers(layers: &[(Tensor, Tensor)], len: usize) -> Tensor {
    let d = layers.first().map(|(k, _)| k.cols()).unwrap_or(0);
    let width = 2 * layers.len() * d;
    let mut data = vec![0.0; len * width];
    for (l, (k, v)) in layers.iter().enumerate() {
        for t in 0..len {
            data[t * width + 2 * l * d..t * width + (2 * l + 1) * d].copy_from_slice(k.row_slice(t));
            data[t * width + (2 * l + 1) * d..t * width + (2 * l + 2) * d].copy_from_slice(v.row_slice(t));
        }
    }
    Tensor::new(vec![len, width], data).expect("prefix shape")
}

impl ActivationHistory {
    pub fn from_rows(enc_rows: &Tensor, dec_rows: &Tensor, config: &ModelConfig) -> Self {
        Self {
            len: enc_rows.rows(),
            enc: split_tensor(enc_rows, config.n_layers, config.d_model),
            dec: split_tensor(dec_rows, config.n_layers, config.d_model),
        }
    }

    /// Inverse of [`ActivationHistory::from_rows`].
    pub fn flatten(&self) -> (Tensor, Tensor) {
        (join_layers(&self.enc, self.len), join_layers(&self.dec, self.len))
    }

    pub fn to_vars(&self, g: &mut Graph) -> PrefixVars {
        let mut konst = |pairs: &[(Tensor, Tensor)]| {
            pairs
                .iter()
                .map(|(k, v)| (g.constant(k.clone()), g.constant(v.clone())))
                .collect()
        };
        PrefixVars {
            len: self.len,
            enc: konst(&self.enc),
            dec: konst(&self.dec),
        }
    }
}

fn active(prefix: Option<&PrefixVars>) -> Option<&PrefixVars> {
    prefix.filter(|p| p.len > 0)
}

pub struct Seq2Seq {
    pub config: ModelConfig,
    truncations: AtomicUsize,
}

impl Clone for Seq2Seq {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            truncations: AtomicUsize::new(self.truncations()),
        }
    }
}

impl std::fmt::Debug for Seq2Seq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Seq2Seq").field("config", &self.config).finish()
    }
}

impl Seq2Seq {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            truncations: AtomicUsize::new(0),
        })
    }

    /// Number of sequences cut to `max_len` so far.
    pub fn truncations(&self) -> usize {
        self.truncations.load(Ordering::Relaxed)
    }

    /// Cuts `ids` to `limit`, counting the event.
    pub fn clip<'a>(&self, ids: &'a [usize], limit: usize) -> &'a [usize] {
        if ids.len() > limit {
            if self.truncations.fetch_add(1, Ordering::Relaxed) == 0 {
                log::warn!("sequence of {} tokens truncated to {}", ids.len(), limit);
            }
            &ids[..limit]
        } else {
            ids
        }
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let c = &self.config;
        let d = c.d_model;
        let emb_std = 1.0 / (d as f64).sqrt();
        store.init_normal("phi/emb/tok", &[c.vocab_size, d], emb_std, rng);
        store.init_normal("phi/emb/enc_pos", &[c.max_len, d], emb_std, rng);
        store.init_normal("phi/emb/dec_pos", &[c.max_len, d], emb_std, rng);
        for l in 0..c.n_layers {
            layers::init_encoder_layer(store, &format!("phi/enc/{}", l), d, c.d_ff, rng);
            let name = format!("phi/dec/{}", l);
            layers::init_layer_norm(store, &format!("{}/ln1", name), d);
            layers::init_attention(store, &format!("{}/self", name), d, rng);
            layers::init_layer_norm(store, &format!("{}/ln2", name), d);
            layers::init_attention(store, &format!("{}/cross", name), d, rng);
            layers::init_layer_norm(store, &format!("{}/ln3", name), d);
            layers::init_feed_forward(store, &format!("{}/ff", name), d, c.d_ff, rng);
        }
        layers::init_layer_norm(store, "phi/enc/ln_f", d);
        layers::init_layer_norm(store, "phi/dec/ln_f", d);
        layers::init_linear(store, "phi/head/w", d, d, rng);
        store.init_const("phi/head/b", &[c.vocab_size], 0.0);
    }

    fn embed(&self, s: &mut Session, ids: &[usize], pos_table: &str) -> OpResult {
        let tok = s.param("phi/emb/tok")?;
        let pos = s.param(pos_table)?;
        let x = s.graph.embedding(tok, ids)?;
        let positions: Vec<usize> = (0..ids.len()).collect();
        let p = s.graph.embedding(pos, &positions)?;
        s.graph.add(x, p)
    }

    /// Encoder states `[n, d]`, one row per input token. `x_ids` must already
    /// fit in `max_len`.
    pub fn encode(&self, s: &mut Session, x_ids: &[usize], prefix: Option<&PrefixVars>) -> OpResult {
        let prefix = active(prefix);
        let mut x = self.embed(s, x_ids, "phi/emb/enc_pos")?;
        for l in 0..self.config.n_layers {
            let kv = prefix.map(|p| p.enc[l]);
            x = encoder_layer(s, &format!("phi/enc/{}", l), x, kv, self.config.n_heads)?;
        }
        layer_norm(s, x, "phi/enc/ln_f")
    }

    /// Next-token logits `[m, V]` for every position of `y_in`.
    pub fn decode_logits(&self, s: &mut Session, enc: Var, y_in: &[usize], prefix: Option<&PrefixVars>) -> OpResult {
        let prefix = active(prefix);
        let n_heads = self.config.n_heads;
        let mut x = self.embed(s, y_in, "phi/emb/dec_pos")?;
        let mask = s.graph.constant(causal_mask(y_in.len(), prefix.map_or(0, |p| p.len)));
        for l in 0..self.config.n_layers {
            let name = format!("phi/dec/{}", l);
            let h = layer_norm(s, x, &format!("{}/ln1", name))?;
            let kv = prefix.map(|p| p.dec[l]);
            let a = attention_block(s, &format!("{}/self", name), h, h, kv, n_heads, Some(mask))?;
            x = s.graph.add(x, a)?;
            let h = layer_norm(s, x, &format!("{}/ln2", name))?;
            let cross_kv = prefix.filter(|_| self.config.prefix_cross_attention).map(|p| p.enc[l]);
            let a = attention_block(s, &format!("{}/cross", name), h, enc, cross_kv, n_heads, None)?;
            x = s.graph.add(x, a)?;
            let h = layer_norm(s, x, &format!("{}/ln3", name))?;
            let f = feed_forward(s, &format!("{}/ff", name), h)?;
            x = s.graph.add(x, f)?;
        }
        let h = layer_norm(s, x, "phi/dec/ln_f")?;
        let z = linear(s, h, "phi/head/w", None)?;
        let tok = s.param("phi/emb/tok")?;
        let logits = s.graph.matmul_nt(z, tok)?;
        let b = s.param("phi/head/b")?;
        s.graph.add_bias(logits, b)
    }

    /// Teacher-forcing split of a target: decoder input `[bos] + y` and
    /// targets `y + [eos]`, cut to `max_len`.
    pub fn teacher_forcing(&self, y: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let mut y_in = Vec::with_capacity(y.len() + 1);
        y_in.push(BOS_ID);
        y_in.extend_from_slice(y);
        let mut targets = y.to_vec();
        targets.push(EOS_ID);
        let n = self.clip(&y_in, self.config.max_len).len();
        y_in.truncate(n);
        targets.truncate(n);
        (y_in, targets)
    }

    /// Mean token negative log-likelihood of `y` (without bos/eos) given `x`.
    pub fn sequence_nll(&self, s: &mut Session, x_ids: &[usize], y: &[usize], prefix: Option<&PrefixVars>) -> OpResult {
        let x_ids = self.clip(x_ids, self.config.max_len);
        let (y_in, targets) = self.teacher_forcing(y);
        let enc = self.encode(s, x_ids, prefix)?;
        let logits = self.decode_logits(s, enc, &y_in, prefix)?;
        s.graph.cross_entropy(logits, &targets)
    }

    /// Full-sequence log-probability of `y` followed by `<eos>`, evaluated
    /// in one teacher-forced pass.
    pub fn sequence_logprob(
        &self,
        params: &ParamStore,
        x_ids: &[usize],
        y: &[usize],
        prefix: Option<&ActivationHistory>,
    ) -> Result<f64> {
        let mut s = Session::frozen(params);
        let pv = prefix.map(|p| p.to_vars(&mut s.graph));
        let nll = self.sequence_nll(&mut s, x_ids, y, pv.as_ref())?;
        let n = (y.len() + 1).min(self.config.max_len);
        Ok(-s.graph.value(nll).data()[0] * n as f64)
    }
}
