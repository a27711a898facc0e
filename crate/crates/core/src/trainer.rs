//! Likelihood training of the generation model in three stages: language
//! model alone, then prefixes under a per-type mask, then prefixes unmasked.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalmetrics::{score_context, Counts, ScoreReport};
use crate::model::{Decoding, EncodedInstance, GenModel};
use crate::numeric::{ParamStore, Session, Var};
use crate::prefix::{PrefixMode, THETA};
use crate::record::{EventRecord, SentenceInstance};
use crate::seq2seq::PHI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Language model only, no prefix.
    Base = 1,
    /// Prefixes with every other type masked out.
    Masked = 2,
    /// Prefixes over all types.
    Unmasked = 3,
}

impl Stage {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Stage::Base),
            2 => Ok(Stage::Masked),
            3 => Ok(Stage::Unmasked),
            _ => Err(Error::Contract(format!("no training stage {}", n))),
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn prefix_mode(self) -> PrefixMode {
        match self {
            Stage::Base => PrefixMode::None,
            Stage::Masked => PrefixMode::Static,
            Stage::Unmasked => PrefixMode::Dynamic,
        }
    }

    pub fn namespace(self) -> &'static str {
        match self {
            Stage::Base => PHI,
            _ => THETA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub warmup_ratio: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub neg_sample_rate: f64,
}

impl TrainConfig {
    pub fn desk(stage: Stage) -> Self {
        let (epochs, learning_rate) = match stage {
            Stage::Base => (20, 3e-4),
            Stage::Masked => (5, 1e-3),
            Stage::Unmasked => (10, 1e-3),
        };
        Self {
            learning_rate,
            weight_decay: 1e-5,
            grad_clip_norm: 5.0,
            warmup_ratio: 0.1,
            epochs,
            batch_size: 16,
            seed: 0,
            neg_sample_rate: 0.04,
        }
    }

    /// Large-model reference values.
    pub fn reference(stage: Stage) -> Self {
        let (epochs, learning_rate) = match stage {
            Stage::Base => (40, 1e-5),
            Stage::Masked => (12, 2e-5),
            Stage::Unmasked => (30, 5e-5),
        };
        Self {
            epochs,
            learning_rate,
            batch_size: 32,
            ..Self::desk(stage)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Contract(format!("train config: {}", what)));
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.neg_sample_rate) {
            return bad("neg_sample_rate must lie in [0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) || !(self.grad_clip_norm > 0.0) {
            return bad("learning rate, decay and clip norm must be non-negative");
        }
        Ok(())
    }
}

/// Names of the language-model and prefix parameters of a store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamPartition {
    pub phi: Vec<String>,
    pub theta: Vec<String>,
}

impl ParamPartition {
    /// Fails when a name belongs to neither namespace.
    pub fn audit(store: &ParamStore) -> Result<Self> {
        let mut phi = Vec::new();
        let mut theta = Vec::new();
        for name in store.names() {
            if name.starts_with(PHI) {
                phi.push(name.to_string());
            } else if name.starts_with(THETA) {
                theta.push(name.to_string());
            } else {
                return Err(Error::Contract(format!("parameter `{}` is neither LM nor prefix", name)));
            }
        }
        Ok(Self { phi, theta })
    }
}

/// Keeps every positive and `floor(rate · negatives)` negatives drawn
/// uniformly without replacement; order is preserved.
pub fn sample_negatives<T: Clone>(items: &[T], is_positive: impl Fn(&T) -> bool, rate: f64, seed: u64) -> Vec<T> {
    assert!((0.0..=1.0).contains(&rate), "negative sampling rate outside [0, 1]");
    let negatives: Vec<usize> = (0..items.len()).filter(|&i| !is_positive(&items[i])).collect();
    let keep = (rate * negatives.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; items.len()];
    for k in index::sample(&mut rng, negatives.len(), keep) {
        chosen[negatives[k]] = true;
    }
    items
        .iter()
        .enumerate()
        .filter(|(i, it)| is_positive(it) || chosen[*i])
        .map(|(_, it)| it.clone())
        .collect()
}

/// Linear warm-up over `warmup_ratio · total` steps, then linear decay to 0.
pub fn learning_rate_at(step: usize, total: usize, warmup_ratio: f64, peak: f64) -> f64 {
    let warm = (warmup_ratio * total as f64).round() as usize;
    if step < warm {
        peak * step as f64 / warm as f64
    } else if total > warm {
        peak * (total.saturating_sub(step)) as f64 / (total - warm) as f64
    } else {
        peak
    }
}

/// Scales gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [(String, Vec<f64>)], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Default)]
pub struct AdamW {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    t: u64,
    pub skipped: usize,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamW {
    pub fn new() -> Self {
        Self::default()
    }

    /// One update at learning rate `lr`. Returns false, and leaves the
    /// parameters and moments untouched, when a gradient is not finite.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        mut grads: Vec<(String, Vec<f64>)>,
        lr: f64,
        weight_decay: f64,
        clip: f64,
    ) -> bool {
        if grads.iter().any(|(_, g)| g.iter().any(|v| !v.is_finite())) {
            self.skipped += 1;
            return false;
        }
        clip_global_norm(&mut grads, clip);
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for (name, g) in grads {
            let Some(p) = params.get_mut(&name) else { continue };
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name).or_insert_with(|| vec![0.0; g.len()]);
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
                *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
                let update = (*mi / bc1) / ((*vi / bc2).sqrt() + ADAM_EPS);
                *w -= lr * (update + weight_decay * *w);
            }
        }
        true
    }
}

/// Mean over instances of the per-instance mean-token NLL, built in `s`.
pub fn nll_loss(
    s: &mut Session,
    model: &GenModel,
    batch: &[&EncodedInstance],
    mode: PrefixMode,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let cache = if mode == PrefixMode::None {
        None
    } else {
        Some(model.prefix.cache(s)?)
    };
    let mut total: Option<Var> = None;
    for inst in batch {
        let pv = match &cache {
            Some(c) => model.prefix.prefix_vars(s, c, mode, inst.type_index, &inst.ctx)?,
            None => None,
        };
        let nll = model.lm.sequence_nll(s, &inst.x, &inst.y, pv.as_ref())?;
        total = Some(match total {
            Some(t) => s.graph.add(t, nll)?,
            None => nll,
        });
    }
    let total = total.expect("non-empty batch");
    Ok(s.graph.scale(total, 1.0 / batch.len() as f64)?)
}

/// Held-out subtasks with their gold records.
pub struct DevSet<'a> {
    pub dataset: &'a [SentenceInstance],
    pub instances: Vec<EncodedInstance>,
}

impl DevSet<'_> {
    fn gold(&self, inst: &EncodedInstance, model: &GenModel) -> Vec<EventRecord> {
        let type_id = &model.ontology.types[inst.type_index].type_id;
        self.dataset[inst.context_index]
            .events
            .iter()
            .filter(|e| &e.event_type == type_id)
            .cloned()
            .collect()
    }
}

/// Subtask-level scores of `model` on `dev`.
pub fn evaluate_subtasks(
    model: &GenModel,
    dev: &DevSet,
    mode: PrefixMode,
    decoding: Decoding,
) -> Result<ScoreReport> {
    let mut trg = Counts::default();
    let mut arg = Counts::default();
    for inst in &dev.instances {
        let tokens = &dev.dataset[inst.context_index].tokens;
        let (_, pred) = model.predict_subtask(tokens, inst.type_index, mode, decoding)?;
        let (t, a) = score_context(&pred, &dev.gold(inst, model));
        trg.add(t);
        arg.add(a);
    }
    Ok(ScoreReport::from_counts(trg, arg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub scores: Option<ScoreReport>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

pub const LOG_HEADER: &str = "epoch,split,loss,trg_p,trg_r,trg_f1,arg_p,arg_r,arg_f1";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{:.6}", r.epoch, r.split, r.loss);
            match &r.scores {
                Some(s) => {
                    let _ = write!(
                        out,
                        ",{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
                        s.trg.p, s.trg.r, s.trg.f1, s.arg.p, s.arg.r, s.arg.f1
                    );
                }
                None => out.push_str(",,,,,,"),
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: Stage,
    pub best_epoch: Option<usize>,
    pub best_dev: Option<ScoreReport>,
    pub steps: usize,
    pub skipped_steps: usize,
    pub log: TrainLog,
}

/// Dev-selection key: Arg-C F1, then Trg-C F1; earlier epochs win ties.
fn better(candidate: &ScoreReport, best: Option<&ScoreReport>) -> bool {
    match best {
        None => true,
        Some(b) => (candidate.arg.f1, candidate.trg.f1) > (b.arg.f1, b.trg.f1),
    }
}

/// Trains one stage in place. Negatives are resampled every epoch from
/// `seed + epoch`. With a dev set, the parameters of the best dev epoch are
/// kept; dev decoding is greedy.
pub fn train_stage(
    stage: Stage,
    model: &mut GenModel,
    train: &[EncodedInstance],
    dev: Option<&DevSet>,
    config: &TrainConfig,
) -> Result<StageReport> {
    config.validate()?;
    match stage {
        Stage::Masked if model.stage < 1 => {
            return Err(Error::Contract("stage 2 needs a stage-1 checkpoint".into()))
        }
        Stage::Unmasked if model.stage < 2 => {
            return Err(Error::Contract("stage 3 needs stage-2 prefix parameters".into()))
        }
        _ => {}
    }
    if train.is_empty() {
        return Err(Error::Contract("empty training set".into()));
    }
    let namespace = stage.namespace();
    let mode = stage.prefix_mode();
    let frozen_ns = if namespace == PHI { THETA } else { PHI };
    let frozen_before = model.namespace_bytes(frozen_ns);

    let per_epoch = sample_negatives(train, |i| i.positive, config.neg_sample_rate, config.seed).len();
    let steps_per_epoch = per_epoch.div_ceil(config.batch_size);
    let total = steps_per_epoch * config.epochs;
    let mut opt = AdamW::new();
    let mut log = TrainLog::default();
    let mut best: Option<(usize, ScoreReport, ParamStore)> = None;
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let epoch_seed = config.seed.wrapping_add(epoch as u64);
        let mut data: Vec<&EncodedInstance> = train.iter().collect();
        data = sample_negatives(&data, |i| i.positive, config.neg_sample_rate, epoch_seed);
        data.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed ^ 0x5eed));
        let mut loss_sum = 0.0;
        for batch in data.chunks(config.batch_size) {
            let (loss, grads) = {
                let mut s = Session::new(&model.params, &[namespace]);
                let loss = nll_loss(&mut s, model, batch, mode)?;
                (s.graph.value(loss).data()[0], s.backward(loss)?)
            };
            loss_sum += loss * batch.len() as f64;
            let lr = learning_rate_at(step, total, config.warmup_ratio, config.learning_rate);
            opt.step(&mut model.params, grads, lr, config.weight_decay, config.grad_clip_norm);
            step += 1;
        }
        let train_loss = loss_sum / data.len() as f64;
        log::info!("stage {} epoch {} train loss {:.4}", stage.number(), epoch, train_loss);
        log.records.push(EpochRecord {
            epoch,
            split: "train",
            loss: train_loss,
            scores: None,
        });
        if let Some(dev) = dev {
            let dev_loss = model.mean_loss(&dev.instances, mode)?;
            let scores = evaluate_subtasks(model, dev, mode, Decoding::Greedy)?;
            log::info!(
                "stage {} epoch {} dev loss {:.4} trg f1 {:.4} arg f1 {:.4}",
                stage.number(),
                epoch,
                dev_loss,
                scores.trg.f1,
                scores.arg.f1
            );
            if better(&scores, best.as_ref().map(|b| &b.1)) {
                best = Some((epoch, scores.clone(), model.params.filtered(namespace)));
            }
            log.records.push(EpochRecord {
                epoch,
                split: "dev",
                loss: dev_loss,
                scores: Some(scores),
            });
        }
    }
    let (best_epoch, best_dev) = match best {
        Some((epoch, scores, params)) => {
            model.params.extend(params);
            (Some(epoch), Some(scores))
        }
        None => (None, None),
    };
    if model.namespace_bytes(frozen_ns) != frozen_before {
        return Err(Error::Contract(format!("frozen parameters `{}` changed during stage {}", frozen_ns, stage.number())));
    }
    model.stage = stage.number();
    Ok(StageReport {
        stage,
        best_epoch,
        best_dev,
        steps: step,
        skipped_steps: opt.skipped,
        log,
    })
}
