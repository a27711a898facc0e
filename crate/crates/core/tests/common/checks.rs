//! Property checks shared by the integration tests and the acceptance
//! target. Each returns a one-line summary on success and the first
//! counterexample on failure.

use std::collections::HashMap;

use eventgen::corpus::generate_synthetic;
use eventgen::evalmetrics::{match_arguments, match_triggers};
use eventgen::irrelevance::{IcConfig, IcModel};
use eventgen::model::{build_vocab, EncodedInstance, GenModel};
use eventgen::numeric::{param_gradient_check, ParamStore, Session, Tensor};
use eventgen::ontology::EventOntology;
use eventgen::prefix::{EncoderConfig, PrefixConfig, PrefixMode, PrefixModel, Stack};
use eventgen::promptgen::build_training_instances;
use eventgen::seq2seq::{beam_search, greedy_decode, Decoder, DecoderState, ModelConfig, EOS_ID};
use eventgen::trainer::{nll_loss, train_stage, Stage, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argument_keys, nested_loop_matches, random_ids, random_model, random_records, round_trip_failures, trigger_keys};

pub type Check = Result<String, String>;

pub const GRAD_TOL: f64 = 1e-5;
const GRAD_EPS: f64 = 1e-5;
/// Coordinates checked per tensor, the largest by analytic magnitude.
const GRAD_COORDS: usize = 8;

pub fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 4,
        d_ff: 32,
        max_len: 80,
    }
}

pub fn small_lm() -> ModelConfig {
    ModelConfig {
        vocab_size: 0,
        d_model: 16,
        n_layers: 2,
        n_heads: 4,
        d_ff: 32,
        max_len: 80,
        prefix_cross_attention: false,
    }
}

pub fn small_prefix(n_types: usize, len: usize) -> PrefixConfig {
    PrefixConfig {
        n_types,
        len,
        d_prime: 8,
        h_dyn: 4,
        context: small_encoder(),
    }
}

/// A d_model 16 generation model over the toy ontology and its encoded
/// training subtasks.
pub fn small_gen_model(n_sents: usize, seed: u64) -> (GenModel, Vec<EncodedInstance>) {
    let ontology = EventOntology::toy();
    let data = generate_synthetic(&ontology, n_sents, 0.5, seed);
    let vocab = build_vocab(&data, &ontology);
    let n_types = ontology.len();
    let mut model = GenModel::new(ontology, vocab, small_lm(), small_prefix(n_types, 2), seed).unwrap();
    let inst = build_training_instances(&data, &model.ontology).unwrap();
    let encoded = model.encode_instances(&inst, &data);
    model.fit_max_steps(&encoded);
    (model, encoded)
}

fn group_of(name: &str) -> &'static str {
    if name.starts_with("phi/") {
        "LM"
    } else if name.ends_with("/p_prime") {
        "P'"
    } else if name.starts_with("theta/prefix/") {
        "MLP"
    } else if name.starts_with("theta/dyn/") {
        "DynPrefixAttn"
    } else if name.starts_with("theta/ctx/") {
        "context encoder"
    } else if name.starts_with("ic/") {
        "IC"
    } else {
        "other"
    }
}

fn top_coords(g: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Checks every tensor of `store` under `namespace` against central
/// differences of `loss`, recording the worst error per group.
fn check_namespace<F>(store: &ParamStore, namespace: &str, loss: F, worst: &mut HashMap<&'static str, f64>) -> Result<(), String>
where
    F: Fn(&mut Session) -> eventgen::numeric::OpResult,
{
    let analytic: HashMap<String, Vec<f64>> = {
        let mut s = Session::new(store, &[namespace]);
        let out = loss(&mut s).map_err(|e| e.to_string())?;
        s.backward(out).map_err(|e| e.to_string())?.into_iter().collect()
    };
    for (name, _) in store.iter().filter(|(n, _)| n.starts_with(namespace)) {
        let g = analytic.get(name).ok_or_else(|| format!("{name}: not reached by the loss"))?;
        if g.iter().all(|&v| v.abs() < 1e-10) {
            return Err(format!("{name}: zero gradient"));
        }
        let coords = top_coords(g, GRAD_COORDS);
        let err = param_gradient_check(store, name, Some(&coords), GRAD_EPS, &loss).map_err(|e| e.to_string())?;
        let slot = worst.entry(group_of(name)).or_insert(0.0);
        *slot = slot.max(err);
        if err >= GRAD_TOL {
            return Err(format!("{name}: relative error {err:e}"));
        }
    }
    Ok(())
}

/// Finite-difference gradients of every parameter group of a 2-layer,
/// d_model 16 model.
pub fn gradient_suite() -> Check {
    let (model, data) = small_gen_model(30, 3);
    let inst = data
        .iter()
        .filter(|i| i.positive)
        .min_by_key(|i| i.x.len() + i.y.len())
        .ok_or("no positive instance")?;
    let mut worst = HashMap::new();
    check_namespace(
        &model.params,
        "phi/",
        |s| Ok(nll_loss(s, &model, &[inst], PrefixMode::None).expect("loss")),
        &mut worst,
    )?;
    check_namespace(
        &model.params,
        "theta/",
        |s| Ok(nll_loss(s, &model, &[inst], PrefixMode::Dynamic).expect("loss")),
        &mut worst,
    )?;
    let ic = IcModel::new(
        model.vocab.clone(),
        IcConfig {
            encoder: small_encoder(),
            hidden: 16,
        },
        5,
    )
    .map_err(|e| e.to_string())?;
    let ids = model.context_ids(&data_tokens(&model, inst));
    check_namespace(
        &ic.params,
        "ic/",
        |s| {
            let z = ic.logits(s, &ids).expect("logits");
            s.graph.cross_entropy(z, &[1])
        },
        &mut worst,
    )?;
    let mut groups: Vec<_> = worst.into_iter().collect();
    groups.sort_by(|a, b| a.0.cmp(b.0));
    if groups.len() != 6 {
        return Err(format!("expected 6 parameter groups, saw {:?}", groups));
    }
    Ok(groups.iter().map(|(g, e)| format!("{g} {e:.1e}")).collect::<Vec<_>>().join(", "))
}

fn data_tokens(model: &GenModel, inst: &EncodedInstance) -> Vec<String> {
    inst.ctx.iter().map(|&i| model.vocab.token(i).to_string()).collect()
}

/// `parse(serialize(gold)) == gold` over `n` synthetic sentences.
pub fn round_trip(n: usize, seed: u64) -> Check {
    let toy = EventOntology::toy();
    let data = generate_synthetic(&toy, n, 0.0, seed);
    let failures = round_trip_failures(&data, &toy);
    if failures.is_empty() {
        Ok(format!("{n}/{n} instances"))
    } else {
        Err(format!("{} failures, first: {}", failures.len(), failures[0]))
    }
}

/// Scores of every `<eos>`-terminated sequence of at most `max_steps`
/// tokens, by depth-first enumeration.
pub fn enumerate_sequences(dec: &Decoder, max_steps: usize) -> Vec<(Vec<usize>, f64)> {
    fn go(dec: &Decoder, st: &DecoderState, last: usize, prefix: &mut Vec<usize>, score: f64, left: usize, out: &mut Vec<(Vec<usize>, f64)>) {
        let mut st = st.clone();
        let lp = dec.step(&mut st, last);
        for (t, &l) in lp.iter().enumerate() {
            if t == EOS_ID {
                out.push((prefix.clone(), score + l));
            } else if left > 1 {
                prefix.push(t);
                go(dec, &st, t, prefix, score + l, left - 1, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(dec, &dec.start(), 1, &mut Vec::new(), 0.0, max_steps, &mut out);
    out
}

/// Beam 1 equals greedy on random models; full-width beam equals the
/// exhaustive argmax on tiny vocabularies.
pub fn decode_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..50 {
        let (model, params) = random_model(12, 16, 2, 4, 100 + trial);
        let x = random_ids(&mut rng, 12, 1..10);
        let dec = Decoder::new(&model, &params, &x, None).map_err(|e| e.to_string())?;
        let g = greedy_decode(&dec, 12);
        let b = beam_search(&dec, 1, 12);
        if g != b.tokens {
            return Err(format!("model {trial}: greedy {g:?} vs beam {:?}", b.tokens));
        }
    }
    let mut oracle_cases = 0;
    for trial in 0..30 {
        let vocab = 3 + trial as usize % 3;
        let (model, params) = random_model(vocab, 8, 2, 2, 200 + trial);
        let x = random_ids(&mut rng, vocab, 1..6);
        let dec = Decoder::new(&model, &params, &x, None).map_err(|e| e.to_string())?;
        for max_steps in 1..=4 {
            let all = enumerate_sequences(&dec, max_steps);
            let best = all
                .iter()
                .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                .expect("at least <eos>");
            let beam = beam_search(&dec, vocab.pow(max_steps as u32), max_steps);
            if !beam.finished || beam.tokens != best.0 || beam.score != best.1 {
                return Err(format!(
                    "vocab {vocab} steps {max_steps}: beam {:?} {} vs oracle {:?} {}",
                    beam.tokens, beam.score, best.0, best.1
                ));
            }
            oracle_cases += 1;
        }
    }
    Ok(format!("50 greedy/beam-1 pairs, {oracle_cases} exhaustive cases"))
}

/// Matcher counts against the nested-loop oracle on `n` random pairs.
pub fn scorer_oracle(n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..n {
        let pred = random_records(&mut rng, 5);
        let gold = random_records(&mut rng, 5);
        let t = match_triggers(&pred, &gold);
        let a = match_arguments(&pred, &gold);
        let (to, ao) = (
            nested_loop_matches(&trigger_keys(&pred), &trigger_keys(&gold)),
            nested_loop_matches(&argument_keys(&pred), &argument_keys(&gold)),
        );
        if (t, a) != (to, ao) {
            return Err(format!("pair {i}: matcher ({t}, {a}) vs oracle ({to}, {ao})"));
        }
    }
    Ok(format!("{n} pairs"))
}

fn eye(n: usize) -> Tensor {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        d[i * n + i] = 1.0;
    }
    Tensor::new(vec![n, n], d).unwrap()
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

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn stack_name(stack: Stack) -> &'static str {
    match stack {
        Stack::Enc => "enc",
        Stack::Dec => "dec",
    }
}

fn prefix_model(n_types: usize, len: usize, seed: u64) -> (PrefixModel, ParamStore) {
    let mut lm = small_lm();
    lm.vocab_size = 20;
    let model = PrefixModel::new(small_prefix(n_types, len), lm).unwrap();
    let mut store = ParamStore::new();
    model.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    (model, store)
}

/// Dynamic prefix rows, the raw prefix rows of the same stack and the
/// per-head attention weights.
fn eval_dynamic(
    model: &PrefixModel,
    store: &ParamStore,
    stack: Stack,
    allowed: Option<&[usize]>,
    ctx: &[usize],
) -> (Tensor, Tensor, Vec<Tensor>) {
    let mut s = Session::frozen(store);
    let cache = model.cache(&mut s).unwrap();
    let c = model.context_vector(&mut s, ctx).unwrap();
    let (dp, w) = model.dynamic_rows(&mut s, &cache, stack, c, allowed).unwrap();
    let si = if stack == Stack::Enc { 0 } else { 1 };
    (
        s.graph.value(dp).clone(),
        s.graph.value(cache.rows[si]).clone(),
        w.iter().map(|&v| s.graph.value(v).clone()).collect(),
    )
}

/// Identity-projection, single-type-mask and attention-normalization
/// identities of the dynamic prefix.
pub fn prefix_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let stacks = [Stack::Enc, Stack::Dec];
    let mut worst_identity = 0.0f64;
    for seed in 0..5 {
        let (model, mut store) = prefix_model(1, 3, seed);
        for stack in stacks {
            for p in ["q", "k", "v", "o"] {
                store.insert(format!("theta/dyn/{}/{}", stack_name(stack), p), eye(model.width()));
            }
        }
        for stack in stacks {
            let ctx = random_ids(&mut rng, 20, 1..10);
            let (dp, p, _) = eval_dynamic(&model, &store, stack, None, &ctx);
            worst_identity = worst_identity.max(max_diff(dp.data(), p.data()));
        }
    }
    if worst_identity > 1e-12 {
        return Err(format!("|E|=1 identity projections: dp differs from sp by {worst_identity:e}"));
    }

    let mut worst_mask = 0.0f64;
    let mut worst_sum = 0.0f64;
    for seed in 0..5 {
        let (model, store) = prefix_model(5, 4, 10 + seed);
        let (d, l) = (model.width(), 4);
        for stack in stacks {
            let name = stack_name(stack);
            let wv = store.get(&format!("theta/dyn/{name}/v")).unwrap();
            let wo = store.get(&format!("theta/dyn/{name}/o")).unwrap();
            for e in 0..5 {
                let ctx = random_ids(&mut rng, 20, 1..10);
                let (dp, p, w) = eval_dynamic(&model, &store, stack, Some(&[e]), &ctx);
                let expect = project(&project(&p.data()[e * l * d..(e + 1) * l * d], wv), wo);
                worst_mask = worst_mask.max(max_diff(dp.data(), &expect));
                for alpha in &w {
                    for (j, &a) in alpha.data().iter().enumerate() {
                        let want = if j % 5 == e { 1.0 } else { 0.0 };
                        worst_mask = worst_mask.max((a - want).abs());
                    }
                }
            }
            let ctx = random_ids(&mut rng, 20, 1..10);
            let (_, _, w) = eval_dynamic(&model, &store, stack, None, &ctx);
            for alpha in &w {
                for row in alpha.data().chunks(5) {
                    if row.iter().any(|&a| a < 0.0) {
                        return Err("negative attention weight".into());
                    }
                    worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
    }
    if worst_mask > 1e-12 {
        return Err(format!("single-type mask differs from static projection by {worst_mask:e}"));
    }
    if worst_sum > 1e-9 {
        return Err(format!("attention rows sum off by {worst_sum:e}"));
    }
    Ok(format!(
        "identity {worst_identity:.1e}, mask {worst_mask:.1e}, row sums {worst_sum:.1e}"
    ))
}

/// Trains stages 1 to 3 briefly on a small model and compares the
/// serialized `phi/` tensors around stages 2 and 3.
pub fn stage_freeze() -> Check {
    let (mut model, data) = small_gen_model(60, 8);
    let cfg = |stage| TrainConfig {
        epochs: 1,
        batch_size: 8,
        neg_sample_rate: 0.2,
        ..TrainConfig::desk(stage)
    };
    train_stage(Stage::Base, &mut model, &data, None, &cfg(Stage::Base)).map_err(|e| e.to_string())?;
    let phi = model.namespace_bytes("phi/");
    let mut theta = model.namespace_bytes("theta/");
    for stage in [Stage::Masked, Stage::Unmasked] {
        let report = train_stage(stage, &mut model, &data, None, &cfg(stage)).map_err(|e| e.to_string())?;
        if report.steps == 0 {
            return Err(format!("stage {} took no steps", stage.number()));
        }
        if model.namespace_bytes("phi/") != phi {
            return Err(format!("phi bytes changed during stage {}", stage.number()));
        }
        let now = model.namespace_bytes("theta/");
        if now == theta {
            return Err(format!("theta unchanged by stage {}", stage.number()));
        }
        theta = now;
    }
    Ok(format!("{} phi bytes identical across stages 2 and 3", phi.len()))
}
