//! Binary classifier deciding whether a context holds any event record, and
//! the context filter applied before generation.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::write_atomic;
use crate::error::{Error, Result};
use crate::model::{load_into, MANIFEST_FILE, TENSORS_FILE};
use crate::numeric::{read_tensors, write_tensors, ParamStore, Session, Var};
use crate::prefix::{ContextEncoder, EncoderConfig};
use crate::record::SentenceInstance;
use crate::seq2seq::layers::{self, linear};
use crate::seq2seq::Vocab;
use crate::trainer::{learning_rate_at, AdamW, TrainConfig};

pub const IC: &str = "ic/";

/// Class index of the "relevant" output.
pub const RELEVANT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcConfig {
    pub encoder: EncoderConfig,
    pub hidden: usize,
}

impl IcConfig {
    pub fn desk(max_len: usize) -> Self {
        Self {
            encoder: EncoderConfig::desk(max_len),
            hidden: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcMode {
    None,
    Trained,
    Gold,
}

pub struct IcModel {
    pub config: IcConfig,
    pub encoder: ContextEncoder,
    pub vocab: Vocab,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct IcManifest {
    config: IcConfig,
    vocab: Vec<String>,
}

impl IcModel {
    pub fn new(vocab: Vocab, config: IcConfig, seed: u64) -> Result<Self> {
        let encoder = ContextEncoder::new(config.encoder, "ic/enc")?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        encoder.init_params(&mut params, vocab.len(), &mut rng);
        let d = config.encoder.d_model;
        layers::init_linear(&mut params, "ic/head/w1", d, config.hidden, &mut rng);
        params.init_const("ic/head/b1", &[config.hidden], 0.0);
        layers::init_linear(&mut params, "ic/head/w2", config.hidden, 2, &mut rng);
        params.init_const("ic/head/b2", &[2], 0.0);
        Ok(Self {
            config,
            encoder,
            vocab,
            params,
        })
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.id(t)).collect()
    }

    /// Class logits `[1, 2]`; index [`RELEVANT`] is the relevant class.
    pub fn logits(&self, s: &mut Session, ids: &[usize]) -> Result<Var> {
        let c = self.encoder.encode(s, ids)?;
        let h = linear(s, c, "ic/head/w1", Some("ic/head/b1"))?;
        let h = s.graph.gelu(h)?;
        Ok(linear(s, h, "ic/head/w2", Some("ic/head/b2"))?)
    }

    pub fn logit_values(&self, tokens: &[String]) -> Result<[f64; 2]> {
        let mut s = Session::frozen(&self.params);
        let z = self.logits(&mut s, &self.ids(tokens))?;
        let d = s.graph.value(z).data();
        Ok([d[0], d[1]])
    }

    /// Class probabilities `[irrelevant, relevant]`.
    pub fn probabilities(&self, tokens: &[String]) -> Result<[f64; 2]> {
        let z = self.logit_values(tokens)?;
        let m = z[0].max(z[1]);
        let e = [(z[0] - m).exp(), (z[1] - m).exp()];
        let total = e[0] + e[1];
        Ok([e[0] / total, e[1] / total])
    }

    /// True for relevant; ties count as relevant.
    pub fn classify(&self, tokens: &[String]) -> Result<bool> {
        Ok(decide(self.logit_values(tokens)?))
    }

    pub fn accuracy(&self, data: &[SentenceInstance]) -> Result<f64> {
        if data.is_empty() {
            return Ok(f64::NAN);
        }
        let mut hits = 0;
        for sent in data {
            if self.classify(&sent.tokens)? == sent.is_relevant() {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut buf = Vec::new();
        write_tensors(&mut buf, self.params.iter())?;
        write_atomic(&dir.join(TENSORS_FILE), &buf)?;
        let manifest = IcManifest {
            config: self.config,
            vocab: self.vocab.tokens().to_vec(),
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))
            .map_err(|e| Error::Checkpoint(format!("{}: {}", dir.join(MANIFEST_FILE).display(), e)))?;
        let m: IcManifest =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("bad IC manifest: {}", e)))?;
        let mut model = Self::new(Vocab::from_tokens(m.vocab), m.config, 0)?;
        let tensors = read_tensors(fs::read(dir.join(TENSORS_FILE))?.as_slice())?;
        load_into(&mut model.params, tensors)?;
        Ok(model)
    }
}

/// Argmax of two logits, ties to relevant.
pub fn decide(logits: [f64; 2]) -> bool {
    logits[RELEVANT] >= logits[1 - RELEVANT]
}

#[derive(Debug, Clone)]
pub struct IcReport {
    pub best_epoch: usize,
    pub dev_accuracy: f64,
    /// `(epoch, train loss, dev accuracy)`.
    pub epochs: Vec<(usize, f64, f64)>,
}

/// Cross-entropy training on every context of `train` (no sampling); keeps
/// the parameters of the epoch with the best dev accuracy, earliest on ties.
pub fn train_ic(
    train: &[SentenceInstance],
    dev: &[SentenceInstance],
    ic_config: IcConfig,
    config: &TrainConfig,
) -> Result<(IcModel, IcReport)> {
    config.validate()?;
    let relevant = train.iter().filter(|s| s.is_relevant()).count();
    if relevant == 0 || relevant == train.len() {
        return Err(Error::Validation(
            "irrelevance classifier needs both relevant and irrelevant training contexts".into(),
        ));
    }
    let texts: Vec<String> = train.iter().map(SentenceInstance::text).collect();
    let vocab = Vocab::build(texts.iter().map(String::as_str));
    let mut model = IcModel::new(vocab, ic_config, config.seed)?;
    let examples: Vec<(Vec<usize>, usize)> = train
        .iter()
        .map(|s| (model.ids(&s.tokens), usize::from(s.is_relevant())))
        .collect();
    let steps_per_epoch = examples.len().div_ceil(config.batch_size);
    let total = steps_per_epoch * config.epochs;
    let mut opt = AdamW::new();
    let mut step = 0;
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut history = Vec::new();
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64)));
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = {
                let mut s = Session::new(&model.params, &[IC]);
                let mut total_loss: Option<Var> = None;
                for &i in batch {
                    let (ids, label) = &examples[i];
                    let z = model.logits(&mut s, ids)?;
                    let l = s.graph.cross_entropy(z, &[*label])?;
                    total_loss = Some(match total_loss {
                        Some(t) => s.graph.add(t, l)?,
                        None => l,
                    });
                }
                let loss = s.graph.scale(total_loss.expect("non-empty batch"), 1.0 / batch.len() as f64)?;
                (s.graph.value(loss).data()[0], s.backward(loss)?)
            };
            loss_sum += loss * batch.len() as f64;
            let lr = learning_rate_at(step, total, config.warmup_ratio, config.learning_rate);
            opt.step(&mut model.params, grads, lr, config.weight_decay, config.grad_clip_norm);
            step += 1;
        }
        let acc = model.accuracy(dev)?;
        let train_loss = loss_sum / examples.len() as f64;
        log::info!("ic epoch {} train loss {:.4} dev accuracy {:.4}", epoch, train_loss, acc);
        history.push((epoch, train_loss, acc));
        if best.as_ref().is_none_or(|b| acc > b.1) {
            best = Some((epoch, acc, model.params.clone()));
        }
    }
    let (best_epoch, dev_accuracy) = match best {
        Some((epoch, acc, params)) => {
            model.params = params;
            (epoch, acc)
        }
        None => (0, f64::NAN),
    };
    Ok((
        model,
        IcReport {
            best_epoch,
            dev_accuracy,
            epochs: history,
        },
    ))
}

/// Which contexts go on to generation. `gold` holds the gold relevance of
/// each context.
pub fn filter_contexts(
    mode: IcMode,
    contexts: &[SentenceInstance],
    model: Option<&IcModel>,
    gold: Option<&[bool]>,
) -> Result<Vec<bool>> {
    match mode {
        IcMode::None => Ok(vec![true; contexts.len()]),
        IcMode::Trained => {
            let model = model.ok_or_else(|| Error::Contract("trained IC filtering needs a classifier".into()))?;
            contexts.iter().map(|c| model.classify(&c.tokens)).collect()
        }
        IcMode::Gold => {
            let gold = gold.ok_or_else(|| Error::Contract("gold IC filtering needs gold labels".into()))?;
            if gold.len() != contexts.len() {
                return Err(Error::Contract(format!(
                    "{} gold labels for {} contexts",
                    gold.len(),
                    contexts.len()
                )));
            }
            Ok(gold.to_vec())
        }
    }
}
