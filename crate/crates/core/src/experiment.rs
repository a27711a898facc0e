//! End-to-end toy experiment: synthetic data, the three training stages,
//! the irrelevance classifier, the Base/StaPref/DynPref ablation, IC modes
//! and prefix-size sweeps.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::corpus::{generate_synthetic, to_jsonl_string};
use crate::error::{Error, Result};
use crate::evalmetrics::{score_dataset, ScoreReport};
use crate::irrelevance::{filter_contexts, train_ic, IcConfig, IcMode, IcModel};
use crate::model::{build_vocab, Decoding, GenModel};
use crate::ontology::EventOntology;
use crate::pipeline::{apply_filter, predict_dataset};
use crate::prefix::{PrefixConfig, PrefixMode};
use crate::promptgen::build_training_instances;
use crate::record::SentenceInstance;
use crate::seq2seq::ModelConfig;
use crate::trainer::{sample_negatives, train_stage, DevSet, Stage, StageReport, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyRunConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub irrelevant_rate: f64,
    pub seed: u64,
    pub beam: usize,
    pub lm: ModelConfig,
    pub prefix: PrefixConfig,
    pub ic: IcConfig,
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    pub stage3: TrainConfig,
    pub ic_train: TrainConfig,
}

impl ToyRunConfig {
    /// 2,000 train / 300 dev / 300 test sentences over the toy ontology,
    /// 80% irrelevant, 4% negatives, beam 6.
    pub fn standard(seed: u64) -> Self {
        let n_types = EventOntology::toy().len();
        let max_len = 80;
        let with_seed = |mut c: TrainConfig| {
            c.seed = seed;
            c
        };
        let stage1 = TrainConfig {
            learning_rate: 2e-3,
            epochs: 30,
            batch_size: 8,
            ..TrainConfig::desk(Stage::Base)
        };
        let ic_train = TrainConfig {
            learning_rate: 1e-3,
            epochs: 4,
            batch_size: 32,
            neg_sample_rate: 1.0,
            ..TrainConfig::desk(Stage::Base)
        };
        Self {
            n_train: 2000,
            n_dev: 300,
            n_test: 300,
            irrelevant_rate: 0.8,
            seed,
            beam: 6,
            lm: ModelConfig::desk(0),
            prefix: PrefixConfig::desk(n_types, max_len),
            ic: IcConfig::desk(max_len),
            stage1: with_seed(stage1),
            stage2: with_seed(TrainConfig::desk(Stage::Masked)),
            stage3: with_seed(TrainConfig::desk(Stage::Unmasked)),
            ic_train: with_seed(ic_train),
        }
    }
}

/// Generated splits of a toy run.
pub struct ToyData {
    pub ontology: EventOntology,
    pub train: Vec<SentenceInstance>,
    pub dev: Vec<SentenceInstance>,
    pub test: Vec<SentenceInstance>,
}

impl ToyData {
    pub fn generate(config: &ToyRunConfig) -> Self {
        let ontology = EventOntology::toy();
        let gen = |n, offset: u64| generate_synthetic(&ontology, n, config.irrelevant_rate, config.seed.wrapping_add(offset));
        Self {
            train: gen(config.n_train, 0),
            dev: gen(config.n_dev, 1),
            test: gen(config.n_test, 2),
            ontology,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyRunReport {
    /// Base / StaPref / DynPref on the test split with the trained IC.
    pub ablation: Vec<(String, ScoreReport)>,
    /// DynPref under each IC mode.
    pub ic_modes: Vec<(IcMode, ScoreReport)>,
    pub ic_dev_accuracy: f64,
    pub ic_test_accuracy: f64,
    /// DynPref predictions with the trained IC, as JSONL.
    pub predictions: String,
    pub stages: Vec<StageReport>,
    pub elapsed: Duration,
}

impl ToyRunReport {
    pub fn score(&self, system: &str) -> Option<&ScoreReport> {
        self.ablation.iter().find(|(n, _)| n == system).map(|(_, s)| s)
    }

    pub fn ic_score(&self, mode: IcMode) -> Option<&ScoreReport> {
        self.ic_modes.iter().find(|(m, _)| *m == mode).map(|(_, s)| s)
    }

    /// Ablation table: one row per system, Trg-C and Arg-C P/R/F1.
    pub fn ablation_table(&self) -> String {
        let mut out = format!(
            "{:<10}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}\n",
            "Model", "Trg-P", "Trg-R", "Trg-F1", "Arg-P", "Arg-R", "Arg-F1"
        );
        for (name, s) in &self.ablation {
            let _ = writeln!(
                out,
                "{:<10}{:>8.2}{:>8.2}{:>8.2}{:>8.2}{:>8.2}{:>8.2}",
                name,
                100.0 * s.trg.p,
                100.0 * s.trg.r,
                100.0 * s.trg.f1,
                100.0 * s.arg.p,
                100.0 * s.arg.r,
                100.0 * s.arg.f1
            );
        }
        out
    }

    pub fn ic_table(&self) -> String {
        let mut out = format!("{:<16}{:>8}{:>8}\n", "IC", "Trg-F1", "Arg-F1");
        for (mode, s) in &self.ic_modes {
            let label = match mode {
                IcMode::None => "w/o IC",
                IcMode::Trained => "w/ IC (trained)",
                IcMode::Gold => "w/ IC (gold)",
            };
            let _ = writeln!(out, "{:<16}{:>8.2}{:>8.2}", label, 100.0 * s.trg.f1, 100.0 * s.arg.f1);
        }
        out
    }
}

/// Encoded train subtasks and the dev set (negatives sampled like training).
fn encode_splits<'a>(
    model: &GenModel,
    data: &'a ToyData,
    dev_rate: f64,
    seed: u64,
) -> Result<(Vec<crate::model::EncodedInstance>, DevSet<'a>)> {
    let train = model.encode_instances(&build_training_instances(&data.train, &data.ontology)?, &data.train);
    let dev_all = model.encode_instances(&build_training_instances(&data.dev, &data.ontology)?, &data.dev);
    let dev = DevSet {
        dataset: &data.dev,
        instances: sample_negatives(&dev_all, |i| i.positive, dev_rate, seed),
    };
    Ok((train, dev))
}

/// Trains stages 2 and 3 on top of a stage-1 model.
pub fn train_prefix_stages(
    model: &mut GenModel,
    data: &ToyData,
    stage2: &TrainConfig,
    stage3: &TrainConfig,
) -> Result<(StageReport, StageReport)> {
    let (train, dev) = encode_splits(model, data, stage2.neg_sample_rate, stage2.seed)?;
    let r2 = train_stage(Stage::Masked, model, &train, Some(&dev), stage2)?;
    let r3 = train_stage(Stage::Unmasked, model, &train, Some(&dev), stage3)?;
    Ok((r2, r3))
}

fn gold_relevance(data: &[SentenceInstance]) -> Vec<bool> {
    data.iter().map(SentenceInstance::is_relevant).collect()
}

/// Runs the full toy pipeline.
pub fn run_toy(config: &ToyRunConfig) -> Result<ToyRunReport> {
    let start = Instant::now();
    let data = ToyData::generate(config);
    let vocab = build_vocab(&data.train, &data.ontology);
    let mut model = GenModel::new(data.ontology.clone(), vocab, config.lm, config.prefix, config.seed)?;
    let (train, dev) = encode_splits(&model, &data, config.stage1.neg_sample_rate, config.seed)?;
    model.fit_max_steps(&train);
    let r1 = train_stage(Stage::Base, &mut model, &train, Some(&dev), &config.stage1)?;
    let decoding = Decoding::Beam(config.beam);
    let keep_all = vec![true; data.test.len()];
    let base_all = predict_dataset(&model, &data.test, &keep_all, PrefixMode::None, decoding, None)?;

    let (ic, ic_report) = train_ic(&data.train, &data.dev, config.ic, &config.ic_train)?;
    let ic_test_accuracy = ic.accuracy(&data.test)?;
    let keep_trained = filter_contexts(IcMode::Trained, &data.test, Some(&ic), None)?;
    let gold = gold_relevance(&data.test);
    let keep_gold = filter_contexts(IcMode::Gold, &data.test, None, Some(&gold))?;

    let r2 = {
        let (train, dev) = encode_splits(&model, &data, config.stage2.neg_sample_rate, config.stage2.seed)?;
        train_stage(Stage::Masked, &mut model, &train, Some(&dev), &config.stage2)?
    };
    let static_all = predict_dataset(&model, &data.test, &keep_all, PrefixMode::Static, decoding, None)?;
    let r3 = {
        let (train, dev) = encode_splits(&model, &data, config.stage3.neg_sample_rate, config.stage3.seed)?;
        train_stage(Stage::Unmasked, &mut model, &train, Some(&dev), &config.stage3)?
    };
    let dynamic_all = predict_dataset(&model, &data.test, &keep_all, PrefixMode::Dynamic, decoding, None)?;

    let score = |preds: &[SentenceInstance], keep: &[bool]| score_dataset(&apply_filter(preds, keep), &data.test);
    let ablation = vec![
        ("Base".to_string(), score(&base_all, &keep_trained)?),
        ("StaPref".to_string(), score(&static_all, &keep_trained)?),
        ("DynPref".to_string(), score(&dynamic_all, &keep_trained)?),
    ];
    let ic_modes = vec![
        (IcMode::None, score(&dynamic_all, &keep_all)?),
        (IcMode::Trained, score(&dynamic_all, &keep_trained)?),
        (IcMode::Gold, score(&dynamic_all, &keep_gold)?),
    ];
    Ok(ToyRunReport {
        ablation,
        ic_modes,
        ic_dev_accuracy: ic_report.dev_accuracy,
        ic_test_accuracy,
        predictions: to_jsonl_string(&apply_filter(&dynamic_all, &keep_trained)),
        stages: vec![r1, r2, r3],
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Prefix length.
    L,
    /// Reparametrization width.
    Dprime,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" => Ok(SweepParam::L),
            "Dprime" => Ok(SweepParam::Dprime),
            _ => Err(Error::Validation(format!("unknown sweep parameter `{}` (L or Dprime)", s))),
        }
    }
}

impl SweepParam {
    pub fn column(self) -> &'static str {
        match self {
            SweepParam::L => "L",
            SweepParam::Dprime => "Dprime",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub trg_f1: f64,
    pub arg_f1: f64,
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!("{},trg_f1,arg_f1\n", param.column());
    for r in rows {
        let _ = writeln!(out, "{},{:.4},{:.4}", r.value, r.trg_f1, r.arg_f1);
    }
    out
}

/// For each value, retrains stages 2 and 3 with the changed prefix size on
/// top of `base` (a stage-1 model) and scores DynPref on `data.test`.
pub fn run_sweep(
    base: &GenModel,
    data: &ToyData,
    param: SweepParam,
    values: &[usize],
    stage2: &TrainConfig,
    stage3: &TrainConfig,
    ic: Option<&IcModel>,
    beam: usize,
) -> Result<Vec<SweepRow>> {
    if base.stage < 1 {
        return Err(Error::Contract("sweep needs a stage-1 model".into()));
    }
    let keep = match ic {
        Some(m) => filter_contexts(IcMode::Trained, &data.test, Some(m), None)?,
        None => vec![true; data.test.len()],
    };
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut pc = base.prefix.config;
        match param {
            SweepParam::L => pc.len = value,
            SweepParam::Dprime => pc.d_prime = value,
        }
        let mut model = GenModel::new(base.ontology.clone(), base.vocab.clone(), base.lm.config, pc, stage2.seed)?;
        model.params.extend(base.phi());
        model.stage = 1;
        model.max_steps = base.max_steps;
        train_prefix_stages(&mut model, data, stage2, stage3)?;
        let preds = predict_dataset(&model, &data.test, &keep, PrefixMode::Dynamic, Decoding::Beam(beam), None)?;
        let s = score_dataset(&preds, &data.test)?;
        log::info!("sweep {}={} trg f1 {:.4} arg f1 {:.4}", param.column(), value, s.trg.f1, s.arg.f1);
        rows.push(SweepRow {
            value,
            trg_f1: s.trg.f1,
            arg_f1: s.arg.f1,
        });
    }
    Ok(rows)
}
