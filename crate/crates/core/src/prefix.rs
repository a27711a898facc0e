//! Type-specific prefixes, their MLP reparametrization, the context encoder
//! and the context-dependent (dynamic) prefix.
//!
//! Prefix rows have width `D = 2·n_layers·d_model`, laid out per layer as
//! `[key | value]`. A prefix tensor `P′` of shape `[|E|, L, D′]` is mapped
//! row-wise through `D′ → D′ (GELU) → D` to give `P`. The dynamic prefix at
//! position `t` attends from the projected context vector over the rows
//! `P[e, t, :]` of all unmasked types.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Graph, OpResult, ParamStore, Session, Tensor, Var};
use crate::seq2seq::layers::{self, encoder_layer, layer_norm, linear};
use crate::seq2seq::{ActivationHistory, ModelConfig, PrefixVars};

/// Namespace of prefix-side parameters.
pub const THETA: &str = "theta/";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

impl EncoderConfig {
    pub fn desk(max_len: usize) -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixConfig {
    pub n_types: usize,
    /// Prefix length `L`.
    pub len: usize,
    /// Reparametrization width `D′`.
    pub d_prime: usize,
    /// Heads of the dynamic prefix attention.
    pub h_dyn: usize,
    pub context: EncoderConfig,
}

impl PrefixConfig {
    pub fn desk(n_types: usize, max_len: usize) -> Self {
        Self {
            n_types,
            len: 8,
            d_prime: 32,
            h_dyn: 4,
            context: EncoderConfig::desk(max_len),
        }
    }

    /// Reference sizes `L = 80`, `D′ = 512`.
    pub fn reference(n_types: usize, max_len: usize) -> Self {
        Self {
            len: 80,
            d_prime: 512,
            ..Self::desk(n_types, max_len)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrefixMode {
    /// Plain language model.
    None,
    /// Dynamic prefix restricted to the subtask's own type.
    Static,
    /// Dynamic prefix over all types.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stack {
    Enc,
    Dec,
}

impl Stack {
    fn name(self) -> &'static str {
        match self {
            Stack::Enc => "enc",
            Stack::Dec => "dec",
        }
    }
}

/// Small transformer encoder that summarizes a token sequence into the final
/// state of a learned pooling slot placed before the tokens.
#[derive(Debug, Clone)]
pub struct ContextEncoder {
    pub config: EncoderConfig,
    pub namespace: String,
}

impl ContextEncoder {
    pub fn new(config: EncoderConfig, namespace: &str) -> Result<Self> {
        if config.d_model % config.n_heads != 0 || config.d_model == 0 || config.max_len == 0 {
            return Err(Error::Contract(format!("invalid context encoder config {:?}", config)));
        }
        Ok(Self {
            config,
            namespace: namespace.trim_end_matches('/').to_string(),
        })
    }

    fn name(&self, part: &str) -> String {
        format!("{}/{}", self.namespace, part)
    }

    pub fn init_params(&self, store: &mut ParamStore, vocab_size: usize, rng: &mut impl Rng) {
        let c = &self.config;
        let std = 1.0 / (c.d_model as f64).sqrt();
        store.init_normal(&self.name("emb/tok"), &[vocab_size, c.d_model], std, rng);
        store.init_normal(&self.name("emb/pos"), &[c.max_len + 1, c.d_model], std, rng);
        store.init_normal(&self.name("pool"), &[1, c.d_model], std, rng);
        for l in 0..c.n_layers {
            layers::init_encoder_layer(store, &self.name(&l.to_string()), c.d_model, c.d_ff, rng);
        }
        layers::init_layer_norm(store, &self.name("ln_f"), c.d_model);
    }

    /// Pooled vector `[1, d_model]`. Tokens beyond `max_len` are dropped; an
    /// empty sequence encodes the pooling slot alone.
    pub fn encode(&self, s: &mut Session, ids: &[usize]) -> OpResult {
        let ids = &ids[..ids.len().min(self.config.max_len)];
        let pool = s.param(&self.name("pool"))?;
        let mut x = if ids.is_empty() {
            pool
        } else {
            let tok = s.param(&self.name("emb/tok"))?;
            let e = s.graph.embedding(tok, ids)?;
            s.graph.concat_rows(&[pool, e])?
        };
        let pos = s.param(&self.name("emb/pos"))?;
        let positions: Vec<usize> = (0..=ids.len()).collect();
        let p = s.graph.embedding(pos, &positions)?;
        x = s.graph.add(x, p)?;
        for l in 0..self.config.n_layers {
            x = encoder_layer(s, &self.name(&l.to_string()), x, None, self.config.n_heads)?;
        }
        let x = layer_norm(s, x, &self.name("ln_f"))?;
        s.graph.slice_rows(x, 0, 1)
    }
}

/// Per-graph values shared by every instance in a batch: reparametrized
/// prefix rows and their key/value projections.
#[derive(Debug, Clone)]
pub struct PrefixCache {
    /// `P` rows `[|E|·L, D]`, type-major.
    pub rows: [Var; 2],
    /// Projected keys per head, position-major rows `t·|E| + e`.
    keys: [Vec<Var>; 2],
    values: [Vec<Var>; 2],
}

pub struct PrefixModel {
    pub config: PrefixConfig,
    pub lm: ModelConfig,
    pub context: ContextEncoder,
}

fn stack_index(stack: Stack) -> usize {
    match stack {
        Stack::Enc => 0,
        Stack::Dec => 1,
    }
}

impl PrefixModel {
    pub fn new(config: PrefixConfig, lm: ModelConfig) -> Result<Self> {
        if config.n_types == 0 {
            return Err(Error::Contract("prefix store needs at least one event type".into()));
        }
        if lm.prefix_width() % config.h_dyn != 0 {
            return Err(Error::Contract(format!(
                "prefix width {} not divisible by {} heads",
                lm.prefix_width(),
                config.h_dyn
            )));
        }
        Ok(Self {
            context: ContextEncoder::new(config.context, "theta/ctx")?,
            config,
            lm,
        })
    }

    pub fn width(&self) -> usize {
        self.lm.prefix_width()
    }

    fn pname(stack: Stack, part: &str) -> String {
        format!("theta/prefix/{}/{}", stack.name(), part)
    }

    fn dname(stack: Stack, part: &str) -> String {
        format!("theta/dyn/{}/{}", stack.name(), part)
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let c = &self.config;
        let (dp, d) = (c.d_prime, self.width());
        for stack in [Stack::Enc, Stack::Dec] {
            store.init_normal(&Self::pname(stack, "p_prime"), &[c.n_types, c.len, dp], 1.0, rng);
            layers::init_linear(store, &Self::pname(stack, "mlp/w1"), dp, dp, rng);
            store.init_const(&Self::pname(stack, "mlp/b1"), &[dp], 0.0);
            layers::init_linear(store, &Self::pname(stack, "mlp/w2"), dp, d, rng);
            store.init_const(&Self::pname(stack, "mlp/b2"), &[d], 0.0);
            layers::init_linear(store, &Self::dname(stack, "ctx"), c.context.d_model, d, rng);
            for p in ["q", "k", "v", "o"] {
                layers::init_linear(store, &Self::dname(stack, p), d, d, rng);
            }
        }
        self.context.init_params(store, self.lm.vocab_size, rng);
    }

    /// `P = MLP(P′)` as `[|E|·L, D]`, row `e·L + t`.
    pub fn prefix_rows(&self, s: &mut Session, stack: Stack) -> OpResult {
        let c = &self.config;
        let p = s.param(&Self::pname(stack, "p_prime"))?;
        let p = s.graph.reshape(p, &[c.n_types * c.len, c.d_prime])?;
        let h = linear(s, p, &Self::pname(stack, "mlp/w1"), Some(&Self::pname(stack, "mlp/b1")))?;
        let h = s.graph.gelu(h)?;
        linear(s, h, &Self::pname(stack, "mlp/w2"), Some(&Self::pname(stack, "mlp/b2")))
    }

    pub fn cache(&self, s: &mut Session) -> Result<PrefixCache> {
        let (e, l) = (self.config.n_types, self.config.len);
        // gather rows into position-major order t·|E| + e
        let order: Vec<usize> = (0..l).flat_map(|t| (0..e).map(move |ei| ei * l + t)).collect();
        let dh = self.width() / self.config.h_dyn;
        let mut rows = Vec::new();
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for stack in [Stack::Enc, Stack::Dec] {
            let p = self.prefix_rows(s, stack)?;
            let pt = s.graph.embedding(p, &order)?;
            let k = linear(s, pt, &Self::dname(stack, "k"), None)?;
            let v = linear(s, pt, &Self::dname(stack, "v"), None)?;
            let mut kh = Vec::new();
            let mut vh = Vec::new();
            for h in 0..self.config.h_dyn {
                kh.push(s.graph.slice_cols(k, h * dh, dh)?);
                vh.push(s.graph.slice_cols(v, h * dh, dh)?);
            }
            rows.push(p);
            keys.push(kh);
            values.push(vh);
        }
        Ok(PrefixCache {
            rows: [rows[0], rows[1]],
            keys: [keys.remove(0), keys.remove(0)],
            values: [values.remove(0), values.remove(0)],
        })
    }

    /// Raw prefix rows `P[e]` of one stack, `[L, D]`.
    pub fn static_rows(
        &self,
        s: &mut Session,
        cache: &PrefixCache,
        stack: Stack,
        e: usize,
    ) -> Result<Var> {
        if e >= self.config.n_types {
            return Err(Error::Contract(format!("type index {} out of range", e)));
        }
        let l = self.config.len;
        Ok(s.graph.slice_rows(cache.rows[stack_index(stack)], e * l, l)?)
    }

    /// Raw reparametrized prefix of type `e` for both stacks.
    pub fn static_prefix(&self, params: &ParamStore, e: usize) -> Result<ActivationHistory> {
        let mut s = Session::frozen(params);
        let cache = self.cache(&mut s)?;
        let enc = self.static_rows(&mut s, &cache, Stack::Enc, e)?;
        let dec = self.static_rows(&mut s, &cache, Stack::Dec, e)?;
        let pv = PrefixVars::from_rows(&mut s.graph, enc, dec, &self.lm)?;
        Ok(vars_to_history(&s.graph, &pv))
    }

    pub fn context_vector(&self, s: &mut Session, ctx_ids: &[usize]) -> OpResult {
        self.context.encode(s, ctx_ids)
    }

    /// Dynamic prefix rows `[L, D]` of one stack for context vector `c`.
    /// `allowed` restricts attention to the listed type indices.
    pub fn dynamic_rows(
        &self,
        s: &mut Session,
        cache: &PrefixCache,
        stack: Stack,
        c: Var,
        allowed: Option<&[usize]>,
    ) -> Result<(Var, Vec<Var>)> {
        let (n_types, l) = (self.config.n_types, self.config.len);
        let mask = match allowed {
            Some([]) => return Err(Error::Contract("type mask must keep at least one type".into())),
            Some(types) => {
                if let Some(&bad) = types.iter().find(|&&t| t >= n_types) {
                    return Err(Error::Contract(format!("type index {} out of range", bad)));
                }
                let mut m = vec![f64::NEG_INFINITY; l * n_types];
                for t in 0..l {
                    for &e in types {
                        m[t * n_types + e] = 0.0;
                    }
                }
                Some(s.graph.constant(Tensor::new(vec![l, n_types], m)?))
            }
            None => None,
        };
        let si = stack_index(stack);
        let dh = self.width() / self.config.h_dyn;
        let scale = 1.0 / (dh as f64).sqrt();
        let ctx = linear(s, c, &Self::dname(stack, "ctx"), None)?;
        let q = linear(s, ctx, &Self::dname(stack, "q"), None)?;
        // A[t, t'·|E| + e] = α[t, e]·[t = t']
        let ones = s.graph.constant(Tensor::full(&[l, 1], 1.0));
        let mut block = vec![0.0; l * l * n_types];
        for t in 0..l {
            for e in 0..n_types {
                block[t * l * n_types + t * n_types + e] = 1.0;
            }
        }
        let block = s.graph.constant(Tensor::new(vec![l, l * n_types], block)?);
        let mut heads = Vec::with_capacity(self.config.h_dyn);
        let mut weights = Vec::with_capacity(self.config.h_dyn);
        for h in 0..self.config.h_dyn {
            let g = &mut s.graph;
            let qh = g.slice_cols(q, h * dh, dh)?;
            let scores = g.matmul_nt(qh, cache.keys[si][h])?;
            let scores = g.scale(scores, scale)?;
            let mut scores = g.reshape(scores, &[l, n_types])?;
            if let Some(m) = mask {
                scores = g.add(scores, m)?;
            }
            let alpha = g.softmax(scores)?;
            weights.push(alpha);
            let flat = g.reshape(alpha, &[1, l * n_types])?;
            let tiled = g.matmul(ones, flat)?;
            let a = g.mul(tiled, block)?;
            heads.push(g.matmul(a, cache.values[si][h])?);
        }
        let joined = if heads.len() == 1 { heads[0] } else { s.graph.concat_cols(&heads)? };
        let out = linear(s, joined, &Self::dname(stack, "o"), None)?;
        Ok((out, weights))
    }

    /// Prefix for one subtask under `mode`; `None` for the plain model.
    pub fn prefix_vars(
        &self,
        s: &mut Session,
        cache: &PrefixCache,
        mode: PrefixMode,
        type_index: usize,
        ctx_ids: &[usize],
    ) -> Result<Option<PrefixVars>> {
        let allowed = [type_index];
        let (enc, dec) = match mode {
            PrefixMode::None => return Ok(None),
            PrefixMode::Static => {
                // the context vector cannot influence a single-type mask
                let c = s.graph.constant(Tensor::zeros(&[1, self.config.context.d_model]));
                let enc = self.dynamic_rows(s, cache, Stack::Enc, c, Some(&allowed))?.0;
                let dec = self.dynamic_rows(s, cache, Stack::Dec, c, Some(&allowed))?.0;
                (enc, dec)
            }
            PrefixMode::Dynamic => {
                let c = self.context_vector(s, ctx_ids)?;
                let enc = self.dynamic_rows(s, cache, Stack::Enc, c, None)?.0;
                let dec = self.dynamic_rows(s, cache, Stack::Dec, c, None)?.0;
                (enc, dec)
            }
        };
        Ok(Some(PrefixVars::from_rows(&mut s.graph, enc, dec, &self.lm)?))
    }

    /// Evaluates the prefix for one subtask as tensors, for decoding.
    pub fn history(
        &self,
        params: &ParamStore,
        mode: PrefixMode,
        type_index: usize,
        ctx_ids: &[usize],
    ) -> Result<Option<ActivationHistory>> {
        if mode == PrefixMode::None {
            return Ok(None);
        }
        let mut s = Session::frozen(params);
        let cache = self.cache(&mut s)?;
        let pv = self
            .prefix_vars(&mut s, &cache, mode, type_index, ctx_ids)?
            .expect("prefix requested");
        Ok(Some(vars_to_history(&s.graph, &pv)))
    }
}

pub fn vars_to_history(g: &Graph, pv: &PrefixVars) -> ActivationHistory {
    let take = |pairs: &[(Var, Var)]| {
        pairs
            .iter()
            .map(|&(k, v)| (g.value(k).clone(), g.value(v).clone()))
            .collect()
    };
    ActivationHistory {
        len: pv.len,
        enc: take(&pv.enc),
        dec: take(&pv.dec),
    }
}

/// History vector `h_i` read from the prefix: the concatenation over layers
/// of the decoder-stack key and value at position `i`, or `None` when
/// `i ≥ L` and the position is produced by the language model itself.
pub fn activation_sequence(dp: &ActivationHistory, i: usize) -> Option<Vec<f64>> {
    if i >= dp.len {
        return None;
    }
    let mut out = Vec::new();
    for (k, v) in &dp.dec {
        out.extend_from_slice(k.row_slice(i));
        out.extend_from_slice(v.row_slice(i));
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lm(vocab: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            max_len: 16,
            prefix_cross_attention: false,
        }
    }

    fn setup(n_types: usize, len: usize) -> (PrefixModel, ParamStore) {
        let ctx = EncoderConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 16,
            max_len: 16,
        };
        let config = PrefixConfig {
            n_types,
            len,
            d_prime: 6,
            h_dyn: 4,
            context: ctx,
        };
        let model = PrefixModel::new(config, lm(12)).unwrap();
        let mut store = ParamStore::new();
        model.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(3));
        (model, store)
    }

    fn eye(n: usize) -> Tensor {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 1.0;
        }
        Tensor::new(vec![n, n], d).unwrap()
    }

    fn set_identity(model: &PrefixModel, store: &mut ParamStore, parts: &[&str]) {
        for stack in [Stack::Enc, Stack::Dec] {
            for p in parts {
                store.insert(PrefixModel::dname(stack, p), eye(model.width()));
            }
        }
    }

    /// `rows · w` with plain loops.
    fn project(rows: &[f64], w: &Tensor) -> Vec<f64> {
        let (k, n) = (w.rows(), w.cols());
        let mut out = vec![0.0; rows.len() / k * n];
        for (r, row) in rows.chunks(k).enumerate() {
            for j in 0..n {
                out[r * n + j] = (0..k).map(|p| row[p] * w.data()[p * n + j]).sum();
            }
        }
        out
    }

    fn eval_rows(
        model: &PrefixModel,
        store: &ParamStore,
        stack: Stack,
        allowed: Option<&[usize]>,
        ctx: &[usize],
    ) -> Result<(Tensor, Tensor, Vec<Tensor>)> {
        let mut s = Session::frozen(store);
        let cache = model.cache(&mut s)?;
        let c = model.context_vector(&mut s, ctx)?;
        let (dp, w) = model.dynamic_rows(&mut s, &cache, stack, c, allowed)?;
        let p = s.graph.value(cache.rows[stack_index(stack)]).clone();
        Ok((
            s.graph.value(dp).clone(),
            p,
            w.iter().map(|&v| s.graph.value(v).clone()).collect(),
        ))
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_projections_single_type_return_static_prefix() {
        let (model, mut store) = setup(1, 3);
        set_identity(&model, &mut store, &["q", "k", "v", "o"]);
        for stack in [Stack::Enc, Stack::Dec] {
            let (dp, p, _) = eval_rows(&model, &store, stack, None, &[4, 5, 6]).unwrap();
            assert!(max_diff(dp.data(), p.data()) <= 1e-12);
        }
        let sp = model.static_prefix(&store, 0).unwrap();
        assert_eq!(sp.len, 3);
        assert_eq!(sp.enc.len(), 2);
    }

    #[test]
    fn single_type_mask_reduces_to_value_output_projection() {
        let (model, store) = setup(4, 3);
        let d = model.width();
        for e in 0..4 {
            let (dp, p, w) = eval_rows(&model, &store, Stack::Dec, Some(&[e]), &[1, 2]).unwrap();
            let sp = &p.data()[e * 3 * d..(e + 1) * 3 * d];
            let wv = store.get(&PrefixModel::dname(Stack::Dec, "v")).unwrap();
            let wo = store.get(&PrefixModel::dname(Stack::Dec, "o")).unwrap();
            let expect = project(&project(sp, wv), wo);
            assert!(max_diff(dp.data(), &expect) <= 1e-12);
            for alpha in &w {
                for row in alpha.data().chunks(4) {
                    for (j, &a) in row.iter().enumerate() {
                        assert_eq!(a, if j == e { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }

    #[test]
    fn full_mask_equals_no_mask_and_weights_are_distributions() {
        let (model, store) = setup(5, 4);
        let (a, _, w) = eval_rows(&model, &store, Stack::Enc, None, &[3, 7]).unwrap();
        let (b, _, _) = eval_rows(&model, &store, Stack::Enc, Some(&[0, 1, 2, 3, 4]), &[3, 7]).unwrap();
        assert!(max_diff(a.data(), b.data()) <= 1e-12);
        for alpha in &w {
            assert_eq!(alpha.shape(), &[4, 5]);
            for row in alpha.data().chunks(5) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn zero_query_gives_uniform_average_for_any_context() {
        let (model, mut store) = setup(3, 2);
        set_identity(&model, &mut store, &["v", "o"]);
        let w = model.width();
        for stack in [Stack::Enc, Stack::Dec] {
            store.insert(PrefixModel::dname(stack, "q"), Tensor::zeros(&[w, w]));
        }
        let d = model.width();
        let mut first: Option<Tensor> = None;
        for ctx in [&[1usize, 2][..], &[9, 9, 9, 4], &[]] {
            let (dp, p, _) = eval_rows(&model, &store, Stack::Dec, None, ctx).unwrap();
            let mut expect = vec![0.0; 2 * d];
            for e in 0..3 {
                for (x, v) in expect.iter_mut().zip(&p.data()[e * 2 * d..(e + 1) * 2 * d]) {
                    *x += v / 3.0;
                }
            }
            assert!(max_diff(dp.data(), &expect) <= 1e-12);
            if let Some(f) = &first {
                assert_eq!(f.data(), dp.data());
            }
            first = Some(dp);
        }
    }

    #[test]
    fn context_changes_dynamic_prefix() {
        let (model, store) = setup(3, 2);
        let (a, _, _) = eval_rows(&model, &store, Stack::Dec, None, &[1, 2, 3]).unwrap();
        let (b, _, _) = eval_rows(&model, &store, Stack::Dec, None, &[4, 5]).unwrap();
        assert!(max_diff(a.data(), b.data()) > 1e-9);
    }

    #[test]
    fn bad_masks_are_contract_errors() {
        let (model, store) = setup(3, 2);
        assert!(matches!(
            eval_rows(&model, &store, Stack::Enc, Some(&[]), &[1]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            eval_rows(&model, &store, Stack::Enc, Some(&[3]), &[1]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(model.static_prefix(&store, 7), Err(Error::Contract(_))));
    }

    #[test]
    fn activation_sequence_reads_prefix_below_len() {
        let (model, store) = setup(2, 3);
        let sp = model.static_prefix(&store, 1).unwrap();
        let h0 = activation_sequence(&sp, 0).unwrap();
        assert_eq!(h0.len(), model.width());
        let (_, dec) = sp.flatten();
        assert_eq!(h0, dec.row_slice(0));
        assert!(activation_sequence(&sp, 3).is_none());
        let empty = ActivationHistory {
            len: 0,
            enc: vec![],
            dec: vec![],
        };
        assert!(activation_sequence(&empty, 0).is_none());
    }

    #[test]
    fn static_mode_ignores_context() {
        let (model, store) = setup(3, 2);
        let a = model.history(&store, PrefixMode::Static, 1, &[1, 2]).unwrap().unwrap();
        let b = model.history(&store, PrefixMode::Static, 1, &[7]).unwrap().unwrap();
        assert_eq!(a.flatten().0.data(), b.flatten().0.data());
        assert!(model.history(&store, PrefixMode::None, 1, &[7]).unwrap().is_none());
    }
}
