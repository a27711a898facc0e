//! The generation model as a unit: language model, prefix machinery,
//! vocabulary, ontology and parameters, plus the checkpoint directory format.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::write_atomic;
use crate::error::{Error, Result};
use crate::numeric::{read_tensors, write_tensors, ParamStore, Session, Tensor};
use crate::ontology::EventOntology;
use crate::outparse::extract_records;
use crate::prefix::{PrefixConfig, PrefixMode, PrefixModel, THETA};
use crate::promptgen::{build_input, build_prompt, Prompt, TrainingInstance};
use crate::record::{EventRecord, SentenceInstance};
use crate::seq2seq::Vocab;
use crate::seq2seq::{beam_search, greedy_decode, Decoder, ModelConfig, Seq2Seq, PHI};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSORS_FILE: &str = "tensors.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoding {
    Greedy,
    Beam(usize),
}

/// A tokenized subtask ready for the loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInstance {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub type_index: usize,
    /// Context tokens for the context encoder.
    pub ctx: Vec<usize>,
    pub context_index: usize,
    pub positive: bool,
}

pub struct GenModel {
    pub lm: Seq2Seq,
    pub prefix: PrefixModel,
    pub vocab: Vocab,
    pub ontology: EventOntology,
    pub params: ParamStore,
    /// Last completed training stage, 0 when untrained.
    pub stage: u8,
    /// Decoding step limit.
    pub max_steps: usize,
    prompts: Vec<Prompt>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    stage: u8,
    max_steps: usize,
    lm: ModelConfig,
    prefix: PrefixConfig,
    vocab: Vec<String>,
    markers: BTreeMap<String, usize>,
    ontology: serde_json::Value,
    phi_tensors: usize,
    theta_tensors: usize,
}

/// Vocabulary over training contexts, prompts and the conjunction used for
/// repeated roles.
pub fn build_vocab(train: &[SentenceInstance], ontology: &EventOntology) -> Vocab {
    let prompts: Vec<String> = ontology.types.iter().map(|d| build_prompt(d).full_text).collect();
    let contexts: Vec<String> = train.iter().map(SentenceInstance::text).collect();
    Vocab::build(
        prompts
            .iter()
            .chain(contexts.iter())
            .map(String::as_str)
            .chain(std::iter::once("and")),
    )
}

impl GenModel {
    pub fn new(
        ontology: EventOntology,
        vocab: Vocab,
        mut lm: ModelConfig,
        prefix: PrefixConfig,
        seed: u64,
    ) -> Result<Self> {
        lm.vocab_size = vocab.len();
        if prefix.n_types != ontology.len() {
            return Err(Error::Contract(format!(
                "prefix store has {} types, ontology {}",
                prefix.n_types,
                ontology.len()
            )));
        }
        let lm = Seq2Seq::new(lm)?;
        let prefix = PrefixModel::new(prefix, lm.config)?;
        let max_len = lm.config.max_len;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        lm.init_params(&mut params, &mut rng);
        prefix.init_params(&mut params, &mut rng);
        let prompts = ontology.types.iter().map(build_prompt).collect();
        Ok(Self {
            lm,
            prefix,
            vocab,
            ontology,
            params,
            stage: 0,
            max_steps: max_len,
            prompts,
        })
    }

    /// Sets the decoding limit to the longest training target plus 8.
    pub fn fit_max_steps(&mut self, train: &[EncodedInstance]) {
        let longest = train.iter().map(|i| i.y.len()).max().unwrap_or(0);
        self.max_steps = longest + 8;
    }

    pub fn n_types(&self) -> usize {
        self.ontology.len()
    }

    pub fn context_ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.id(t)).collect()
    }

    pub fn input_ids(&self, type_index: usize, tokens: &[String]) -> Vec<usize> {
        self.vocab.tokenize(&build_input(&self.prompts[type_index], tokens))
    }

    pub fn encode_instances(
        &self,
        instances: &[TrainingInstance],
        dataset: &[SentenceInstance],
    ) -> Vec<EncodedInstance> {
        instances
            .iter()
            .map(|inst| EncodedInstance {
                x: self.vocab.tokenize(&inst.input),
                y: self.vocab.tokenize(&inst.target),
                type_index: inst.type_index,
                ctx: self.context_ids(&dataset[inst.context_index].tokens),
                context_index: inst.context_index,
                positive: inst.is_positive(),
            })
            .collect()
    }

    /// Generated text and extracted records for one (context, type) subtask.
    pub fn predict_subtask(
        &self,
        tokens: &[String],
        type_index: usize,
        mode: PrefixMode,
        decoding: Decoding,
    ) -> Result<(String, Vec<EventRecord>)> {
        let ctx = self.context_ids(tokens);
        let history = self.prefix.history(&self.params, mode, type_index, &ctx)?;
        let x = self.input_ids(type_index, tokens);
        let dec = Decoder::new(&self.lm, &self.params, &x, history.as_ref())?;
        let max_steps = self.max_steps;
        let ids = match decoding {
            Decoding::Greedy => greedy_decode(&dec, max_steps),
            Decoding::Beam(k) => beam_search(&dec, k, max_steps).tokens,
        };
        let text = self.vocab.detokenize(&ids);
        let records = extract_records(&text, &self.ontology.types[type_index], tokens);
        Ok((text, records))
    }

    /// Mean token NLL of encoded instances, without gradients.
    pub fn mean_loss(&self, data: &[EncodedInstance], mode: PrefixMode) -> Result<f64> {
        if data.is_empty() {
            return Ok(f64::NAN);
        }
        let mut total = 0.0;
        for chunk in data.chunks(32) {
            let mut s = Session::frozen(&self.params);
            let cache = self.prefix.cache(&mut s)?;
            for inst in chunk {
                let pv = self.prefix.prefix_vars(&mut s, &cache, mode, inst.type_index, &inst.ctx)?;
                let nll = self.lm.sequence_nll(&mut s, &inst.x, &inst.y, pv.as_ref())?;
                total += s.graph.value(nll).data()[0];
            }
        }
        Ok(total / data.len() as f64)
    }

    pub fn phi(&self) -> ParamStore {
        self.params.filtered(PHI)
    }

    pub fn theta(&self) -> ParamStore {
        self.params.filtered(THETA)
    }

    /// Serialized bytes of one parameter namespace.
    pub fn namespace_bytes(&self, namespace: &str) -> Vec<u8> {
        let mut buf = Vec::new();
        write_tensors(&mut buf, self.params.iter().filter(|(n, _)| n.starts_with(namespace)))
            .expect("writing to memory");
        buf
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let partition = crate::trainer::ParamPartition::audit(&self.params)?;
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            stage: self.stage,
            max_steps: self.max_steps,
            lm: self.lm.config,
            prefix: self.prefix.config,
            vocab: self.vocab.tokens().to_vec(),
            markers: self.vocab.marker_ids().into_iter().collect(),
            ontology: serde_json::from_str(&self.ontology.to_json_string())?,
            phi_tensors: partition.phi.len(),
            theta_tensors: partition.theta.len(),
        };
        let mut buf = Vec::new();
        write_tensors(&mut buf, self.params.iter())?;
        write_atomic(&dir.join(TENSORS_FILE), &buf)?;
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))
            .map_err(|e| Error::Checkpoint(format!("{}: {}", dir.join(MANIFEST_FILE).display(), e)))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("bad manifest: {}", e)))?;
        let vocab = Vocab::from_tokens(m.vocab);
        let markers: BTreeMap<String, usize> = vocab.marker_ids().into_iter().collect();
        if markers != m.markers {
            return Err(Error::Checkpoint("marker ids differ from the stored vocabulary".into()));
        }
        let ontology = EventOntology::from_json_str(&m.ontology.to_string())?;
        let mut model = Self::new(ontology, vocab, m.lm, m.prefix, 0)?;
        let bytes = fs::read(dir.join(TENSORS_FILE))?;
        let tensors = read_tensors(bytes.as_slice())?;
        load_into(&mut model.params, tensors)?;
        model.stage = m.stage;
        model.max_steps = m.max_steps;
        Ok(model)
    }
}

/// Replaces every tensor of `store` with the same-named stored tensor;
/// names and shapes must match exactly.
pub fn load_into(store: &mut ParamStore, tensors: Vec<(String, Tensor)>) -> Result<()> {
    if tensors.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} tensors, model expects {}",
            tensors.len(),
            store.len()
        )));
    }
    for (name, t) in tensors {
        let slot = store
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor `{}`", name)))?;
        if slot.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` has shape {:?}, expected {:?}",
                name,
                t.shape(),
                slot.shape()
            )));
        }
        store.insert(name, t);
    }
    Ok(())
}
