use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use eventgen::corpus::{generate_synthetic, read_jsonl, stats_table, transfer_split, write_atomic, write_jsonl};
use eventgen::evalmetrics::score_dataset;
use eventgen::experiment::{run_sweep, sweep_csv, SweepParam, ToyData};
use eventgen::irrelevance::{filter_contexts, train_ic, IcConfig, IcMode, IcModel};
use eventgen::model::{build_vocab, Decoding, EncodedInstance, GenModel};
use eventgen::ontology::{load_ontology, EventOntology};
use eventgen::pipeline::predict_dataset;
use eventgen::prefix::{PrefixConfig, PrefixMode};
use eventgen::promptgen::build_training_instances;
use eventgen::record::SentenceInstance;
use eventgen::seq2seq::ModelConfig;
use eventgen::trainer::{sample_negatives, train_stage, DevSet, Stage, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "eventgen", version, about = "Template-based event extraction with dynamic prefixes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic annotated corpus.
    GenData(GenDataArgs),
    /// Stage 1: train the language model without prefixes.
    TrainBase(TrainBaseArgs),
    /// Train the irrelevance classifier.
    TrainIc(TrainIcArgs),
    /// Stage 2 (masked / static) or stage 3 (dynamic) prefix training.
    TrainPrefix(TrainPrefixArgs),
    /// Decode event records for every context of a corpus.
    Predict(PredictArgs),
    /// Score predictions against gold.
    Score(ScoreArgs),
    /// Retrain prefixes for several prefix sizes and report F1 per value.
    Sweep(SweepArgs),
    /// Split a corpus into source and target event types.
    SplitTransfer(SplitTransferArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenDataArgs {
    /// toy, ace, ere, or a path to an ontology JSON file.
    #[arg(long, default_value = "toy")]
    ontology: String,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0.8)]
    irrelevant_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize, Clone)]
struct TrainFlags {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the preset's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides the preset's peak learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    neg_rate: Option<f64>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Where to write the per-epoch CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum Preset {
    Desk,
    Reference,
}

#[derive(Args, Debug, Serialize)]
struct TrainBaseArgs {
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, default_value = "toy")]
    ontology: String,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 80)]
    max_len: usize,
    /// Prefix length L.
    #[arg(long, default_value_t = 8)]
    prefix_len: usize,
    /// Prefix reparametrization width D′.
    #[arg(long, default_value_t = 32)]
    d_prime: usize,
    /// Also prepend the encoder prefix to cross-attention.
    #[arg(long)]
    prefix_cross_attention: bool,
    /// Output checkpoint directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TrainIcArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 80)]
    max_len: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum PrefixTrainMode {
    Static,
    Dynamic,
}

#[derive(Args, Debug, Serialize)]
struct TrainPrefixArgs {
    #[command(flatten)]
    flags: TrainFlags,
    /// Input checkpoint (stage 1 for stage 2, stage 2 for stage 3).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3), conflicts_with = "mode")]
    stage: Option<u8>,
    /// static = stage 2, dynamic = stage 3.
    #[arg(long, value_enum)]
    mode: Option<PrefixTrainMode>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum DecodeMode {
    Base,
    Static,
    Dynamic,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Annotated contexts; annotations are only read for `--ic gold`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = IcArg::None)]
    ic: IcArg,
    /// Classifier directory for `--ic trained`.
    #[arg(long)]
    ic_model: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    beam: usize,
    /// Prefix mode; defaults to the checkpoint's last stage.
    #[arg(long, value_enum)]
    mode: Option<DecodeMode>,
    /// Comma-separated type ids to decode (all by default).
    #[arg(long, value_delimiter = ',')]
    types: Option<Vec<String>>,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum IcArg {
    None,
    Trained,
    Gold,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    /// Stage-1 checkpoint.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_parser = ["L", "Dprime"])]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    #[arg(long)]
    ic_model: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    beam: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs2: Option<usize>,
    #[arg(long)]
    epochs3: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SplitTransferArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "ace")]
    ontology: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving src_train/src_test/tgt_train/tgt_test JSONL.
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Data(eventgen::Error),
}

impl From<eventgen::Error> for CliError {
    fn from(e: eventgen::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    seed: Option<u64>,
    version: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    wall_time_secs: f64,
}

fn version() -> String {
    let described = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string());
    match described {
        Some(d) if !d.is_empty() => format!("{}-{}", env!("CARGO_PKG_VERSION"), d),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Manifest path for an artifact: inside a directory, or beside a file.
fn manifest_path(artifact: &Path) -> PathBuf {
    if artifact.is_dir() {
        artifact.join("run_manifest.json")
    } else {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        artifact.with_file_name(name)
    }
}

fn write_manifest<C: Serialize>(
    command: &str,
    config: &C,
    seed: Option<u64>,
    inputs: &[&Path],
    output: &Path,
    start: Instant,
) -> CliResult {
    let m = RunManifest {
        command,
        config,
        seed,
        version: version(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: vec![output.display().to_string()],
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    let mut json = serde_json::to_string_pretty(&m).map_err(eventgen::Error::from)?;
    json.push('\n');
    write_atomic(&manifest_path(output), json.as_bytes())?;
    Ok(())
}

fn ontology_from(spec: &str) -> CliResult<EventOntology> {
    Ok(match spec {
        "toy" => EventOntology::toy(),
        "ace" => EventOntology::ace(),
        "ere" => EventOntology::ere(),
        path => load_ontology(Path::new(path))?,
    })
}

fn stage_config(stage: Stage, flags: &TrainFlags) -> TrainConfig {
    let mut c = match flags.preset {
        Preset::Desk => TrainConfig::desk(stage),
        Preset::Reference => TrainConfig::reference(stage),
    };
    c.seed = flags.seed;
    if let Some(e) = flags.epochs {
        c.epochs = e;
    }
    if let Some(lr) = flags.lr {
        c.learning_rate = lr;
    }
    if let Some(b) = flags.batch_size {
        c.batch_size = b;
    }
    if let Some(r) = flags.neg_rate {
        c.neg_sample_rate = r;
    }
    c
}

struct Splits {
    train: Vec<SentenceInstance>,
    dev: Vec<SentenceInstance>,
}

fn load_splits(flags: &TrainFlags) -> CliResult<Splits> {
    Ok(Splits {
        train: read_jsonl(&flags.train)?,
        dev: read_jsonl(&flags.dev)?,
    })
}

fn encode(model: &GenModel, data: &[SentenceInstance]) -> CliResult<Vec<EncodedInstance>> {
    Ok(model.encode_instances(&build_training_instances(data, &model.ontology)?, data))
}

fn run_stage(stage: Stage, model: &mut GenModel, splits: &Splits, flags: &TrainFlags) -> CliResult {
    let config = stage_config(stage, flags);
    config.validate()?;
    let train = encode(model, &splits.train)?;
    if stage == Stage::Base {
        model.fit_max_steps(&train);
    }
    let dev = DevSet {
        dataset: &splits.dev,
        instances: sample_negatives(&encode(model, &splits.dev)?, |i| i.positive, config.neg_sample_rate, config.seed),
    };
    let report = train_stage(stage, model, &train, Some(&dev), &config)?;
    log::info!(
        "stage {} done: {} steps, {} skipped, best epoch {:?}",
        stage.number(),
        report.steps,
        report.skipped_steps,
        report.best_epoch
    );
    if let Some(path) = &flags.log {
        write_atomic(path, report.log.to_csv().as_bytes())?;
    }
    Ok(())
}

fn gen_data(a: &GenDataArgs) -> CliResult {
    let start = Instant::now();
    if !(0.0..=1.0).contains(&a.irrelevant_rate) {
        return Err(CliError::Usage("--irrelevant-rate must lie in [0, 1]".into()));
    }
    let ontology = ontology_from(&a.ontology)?;
    let data = generate_synthetic(&ontology, a.n, a.irrelevant_rate, a.seed);
    write_jsonl(&a.out, &data)?;
    write_manifest("gen-data", a, Some(a.seed), &[], &a.out, start)
}

fn train_base(a: &TrainBaseArgs) -> CliResult {
    let start = Instant::now();
    let ontology = ontology_from(&a.ontology)?;
    let splits = load_splits(&a.flags)?;
    let vocab = build_vocab(&splits.train, &ontology);
    let lm = ModelConfig {
        vocab_size: vocab.len(),
        d_model: a.d_model,
        n_layers: a.layers,
        n_heads: a.heads,
        d_ff: 2 * a.d_model,
        max_len: a.max_len,
        prefix_cross_attention: a.prefix_cross_attention,
    };
    let prefix = PrefixConfig {
        len: a.prefix_len,
        d_prime: a.d_prime,
        ..PrefixConfig::desk(ontology.len(), a.max_len)
    };
    let mut model = GenModel::new(ontology, vocab, lm, prefix, a.flags.seed)?;
    run_stage(Stage::Base, &mut model, &splits, &a.flags)?;
    model.save(&a.out)?;
    write_manifest("train-base", a, Some(a.flags.seed), &[&a.flags.train, &a.flags.dev], &a.out, start)
}

fn train_ic_cmd(a: &TrainIcArgs) -> CliResult {
    let start = Instant::now();
    let train = read_jsonl(&a.train)?;
    let dev = read_jsonl(&a.dev)?;
    let config = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: 32,
        seed: a.seed,
        neg_sample_rate: 1.0,
        ..TrainConfig::desk(Stage::Base)
    };
    let (model, report) = train_ic(&train, &dev, IcConfig::desk(a.max_len), &config)?;
    log::info!("IC best epoch {} dev accuracy {:.4}", report.best_epoch, report.dev_accuracy);
    model.save(&a.out)?;
    write_manifest("train-ic", a, Some(a.seed), &[&a.train, &a.dev], &a.out, start)
}

fn train_prefix(a: &TrainPrefixArgs) -> CliResult {
    let start = Instant::now();
    let stage = match (a.stage, a.mode) {
        (Some(n), None) => Stage::from_number(n)?,
        (None, Some(PrefixTrainMode::Static)) => Stage::Masked,
        (None, Some(PrefixTrainMode::Dynamic)) => Stage::Unmasked,
        _ => return Err(CliError::Usage("give exactly one of --stage or --mode".into())),
    };
    let mut model = GenModel::load(&a.model)?;
    let splits = load_splits(&a.flags)?;
    run_stage(stage, &mut model, &splits, &a.flags)?;
    model.save(&a.out)?;
    write_manifest("train-prefix", a, Some(a.flags.seed), &[&a.model, &a.flags.train, &a.flags.dev], &a.out, start)
}

fn predict(a: &PredictArgs) -> CliResult {
    let start = Instant::now();
    if a.beam == 0 {
        return Err(CliError::Usage("--beam must be at least 1".into()));
    }
    let model = GenModel::load(&a.model)?;
    let data = read_jsonl(&a.data)?;
    let mode = match a.mode {
        Some(DecodeMode::Base) => PrefixMode::None,
        Some(DecodeMode::Static) => PrefixMode::Static,
        Some(DecodeMode::Dynamic) => PrefixMode::Dynamic,
        None => match model.stage {
            0 | 1 => PrefixMode::None,
            2 => PrefixMode::Static,
            _ => PrefixMode::Dynamic,
        },
    };
    let types = match &a.types {
        Some(ids) => Some(
            ids.iter()
                .map(|t| model.ontology.index_of(t).ok_or_else(|| eventgen::Error::UnknownEventType(t.clone())))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let ic_model = match (a.ic, &a.ic_model) {
        (IcArg::Trained, Some(dir)) => Some(IcModel::load(dir)?),
        (IcArg::Trained, None) => return Err(CliError::Usage("--ic trained needs --ic-model".into())),
        _ => None,
    };
    let gold: Vec<bool> = data.iter().map(SentenceInstance::is_relevant).collect();
    let ic_mode = match a.ic {
        IcArg::None => IcMode::None,
        IcArg::Trained => IcMode::Trained,
        IcArg::Gold => IcMode::Gold,
    };
    let keep = filter_contexts(ic_mode, &data, ic_model.as_ref(), Some(&gold))?;
    let preds = predict_dataset(&model, &data, &keep, mode, Decoding::Beam(a.beam), types.as_deref())?;
    write_jsonl(&a.out, &preds)?;
    let mut inputs = vec![a.model.as_path(), a.data.as_path()];
    if let Some(p) = &a.ic_model {
        inputs.push(p);
    }
    write_manifest("predict", a, None, &inputs, &a.out, start)
}

fn score(a: &ScoreArgs) -> CliResult {
    let report = score_dataset(&read_jsonl(&a.pred)?, &read_jsonl(&a.gold)?)?;
    print!("{}", report.to_table());
    if let Some(path) = &a.json {
        let start = Instant::now();
        write_atomic(path, format!("{}\n", report.to_json()).as_bytes())?;
        write_manifest("score", a, None, &[&a.pred, &a.gold], path, start)?;
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> CliResult {
    let start = Instant::now();
    let param: SweepParam = a.param.parse().map_err(|e: eventgen::Error| CliError::Usage(e.to_string()))?;
    if a.values.contains(&0) {
        return Err(CliError::Usage("sweep values must be positive".into()));
    }
    let base = GenModel::load(&a.model)?;
    let data = ToyData {
        ontology: base.ontology.clone(),
        train: read_jsonl(&a.train)?,
        dev: read_jsonl(&a.dev)?,
        test: read_jsonl(&a.test)?,
    };
    let ic = a.ic_model.as_deref().map(IcModel::load).transpose()?;
    let with = |stage: Stage, epochs: Option<usize>| {
        let mut c = TrainConfig::desk(stage);
        c.seed = a.seed;
        if let Some(e) = epochs {
            c.epochs = e;
        }
        c
    };
    let rows = run_sweep(
        &base,
        &data,
        param,
        &a.values,
        &with(Stage::Masked, a.epochs2),
        &with(Stage::Unmasked, a.epochs3),
        ic.as_ref(),
        a.beam,
    )?;
    write_atomic(&a.out, sweep_csv(param, &rows).as_bytes())?;
    let mut inputs = vec![a.model.as_path(), a.train.as_path(), a.dev.as_path(), a.test.as_path()];
    if let Some(p) = &a.ic_model {
        inputs.push(p);
    }
    write_manifest("sweep", a, Some(a.seed), &inputs, &a.out, start)
}

fn split_transfer_cmd(a: &SplitTransferArgs) -> CliResult {
    let start = Instant::now();
    let ontology = ontology_from(&a.ontology)?;
    let data = read_jsonl(&a.data)?;
    let split = transfer_split(&data, &ontology, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    let parts: [(&str, &[SentenceInstance]); 4] = [
        ("src_train", &split.src_train),
        ("src_test", &split.src_test),
        ("tgt_train", &split.tgt_train),
        ("tgt_test", &split.tgt_test),
    ];
    for (name, rows) in parts {
        write_jsonl(&a.out.join(format!("{}.jsonl", name)), rows)?;
    }
    let types = serde_json::json!({ "src_types": split.src_types, "tgt_types": split.tgt_types });
    write_atomic(&a.out.join("types.json"), format!("{:#}\n", types).as_bytes())?;
    eprint!("{}", stats_table(&ontology.name, &parts));
    write_manifest("split-transfer", a, Some(a.seed), &[&a.data], &a.out, start)
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::TrainBase(a) => train_base(a),
        Command::TrainIc(a) => train_ic_cmd(a),
        Command::TrainPrefix(a) => train_prefix(a),
        Command::Predict(a) => predict(a),
        Command::Score(a) => score(a),
        Command::Sweep(a) => sweep(a),
        Command::SplitTransfer(a) => split_transfer_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {}", e);
            ExitCode::from(2)
        }
    }
}
