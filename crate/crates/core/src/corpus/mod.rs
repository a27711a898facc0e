//! Dataset I/O, the synthetic corpus generator and the transfer split.

mod synthetic;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ontology::EventOntology;
pub use crate::record::SentenceInstance;

pub use synthetic::{generate_synthetic, template_words, ENTITY_POOLS, IRRELEVANT_CUES};

/// Sentences shorter than this are dropped by [`transfer_split`].
pub const MIN_TRANSFER_TOKENS: usize = 8;
pub const SOURCE_TYPE_COUNT: usize = 10;

pub fn read_jsonl(path: &Path) -> Result<Vec<SentenceInstance>> {
    let file = std::fs::File::open(path)?;
    let display = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let data_err = |detail: String| Error::Data {
            path: display.clone(),
            line: i + 1,
            detail,
        };
        let inst: SentenceInstance =
            serde_json::from_str(&line).map_err(|e| data_err(e.to_string()))?;
        inst.validate().map_err(|e| data_err(e.to_string()))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn to_jsonl_string(data: &[SentenceInstance]) -> String {
    let mut s = String::new();
    for inst in data {
        s.push_str(&serde_json::to_string(inst).expect("instance serializes"));
        s.push('\n');
    }
    s
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_jsonl(path: &Path, data: &[SentenceInstance]) -> Result<()> {
    write_atomic(path, to_jsonl_string(data).as_bytes())
}

/// Event counts per type in ontology order.
pub fn type_frequencies(data: &[SentenceInstance], ontology: &EventOntology) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in data {
        for e in &s.events {
            *counts.entry(e.event_type.as_str()).or_default() += 1;
        }
    }
    ontology
        .types
        .iter()
        .filter_map(|t| counts.get(t.type_id.as_str()).map(|&n| (t.type_id.clone(), n)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSplit {
    pub src_types: Vec<String>,
    pub tgt_types: Vec<String>,
    pub src_train: Vec<SentenceInstance>,
    pub src_test: Vec<SentenceInstance>,
    pub tgt_train: Vec<SentenceInstance>,
    pub tgt_test: Vec<SentenceInstance>,
}

fn restrict(data: &[SentenceInstance], types: &[String]) -> Vec<SentenceInstance> {
    data.iter()
        .filter_map(|s| {
            let events: Vec<_> = s
                .events
                .iter()
                .filter(|e| types.contains(&e.event_type))
                .cloned()
                .collect();
            (!events.is_empty()).then(|| SentenceInstance {
                events,
                ..s.clone()
            })
        })
        .collect()
}

fn split_4_1(mut data: Vec<SentenceInstance>, rng: &mut ChaCha8Rng) -> (Vec<SentenceInstance>, Vec<SentenceInstance>) {
    data.shuffle(rng);
    let n_train = (data.len() * 4 + 2) / 5;
    let test = data.split_off(n_train);
    (data, test)
}

/// Source types are the ten most frequent (ties by ontology order); all other
/// retained types form the target. Only sentences of at least eight tokens
/// with events are kept, and each side sees only its own events.
pub fn transfer_split(data: &[SentenceInstance], ontology: &EventOntology, seed: u64) -> Result<TransferSplit> {
    let kept: Vec<SentenceInstance> = data
        .iter()
        .filter(|s| s.tokens.len() >= MIN_TRANSFER_TOKENS && s.is_relevant())
        .cloned()
        .collect();
    let mut freq = type_frequencies(&kept, ontology);
    if freq.len() < 2 {
        return Err(Error::Contract(format!(
            "transfer split needs at least 2 event types, found {}",
            freq.len()
        )));
    }
    // stable sort keeps ontology order among equal counts
    freq.sort_by(|a, b| b.1.cmp(&a.1));
    let n_src = if freq.len() > SOURCE_TYPE_COUNT {
        SOURCE_TYPE_COUNT
    } else {
        let n = freq.len().div_ceil(2);
        log::warn!(
            "only {} event types present; using the top {} as source types",
            freq.len(),
            n
        );
        n
    };
    let mut src_types: Vec<String> = freq[..n_src].iter().map(|(t, _)| t.clone()).collect();
    let mut tgt_types: Vec<String> = freq[n_src..].iter().map(|(t, _)| t.clone()).collect();
    let by_order = |v: &mut Vec<String>| v.sort_by_key(|t| ontology.index_of(t));
    by_order(&mut src_types);
    by_order(&mut tgt_types);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (src_train, src_test) = split_4_1(restrict(&kept, &src_types), &mut rng);
    let (tgt_train, tgt_test) = split_4_1(restrict(&kept, &tgt_types), &mut rng);
    Ok(TransferSplit {
        src_types,
        tgt_types,
        src_train,
        src_test,
        tgt_train,
        tgt_test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitStats {
    pub sents: usize,
    pub events: usize,
    pub roles: usize,
}

pub fn split_stats(data: &[SentenceInstance]) -> SplitStats {
    SplitStats {
        sents: data.len(),
        events: data.iter().map(|s| s.events.len()).sum(),
        roles: data
            .iter()
            .flat_map(|s| &s.events)
            .map(|e| e.arguments.len())
            .sum(),
    }
}

/// Dataset / Split / #Sents / #Events / #Roles table.
pub fn stats_table(dataset: &str, splits: &[(&str, &[SentenceInstance])]) -> String {
    let mut s = String::new();
    writeln!(s, "{:<10} {:<6} {:>7} {:>8} {:>7}", "Dataset", "Split", "#Sents", "#Events", "#Roles").unwrap();
    for (i, (name, data)) in splits.iter().enumerate() {
        let st = split_stats(data);
        let label = if i == 0 { dataset } else { "" };
        writeln!(s, "{:<10} {:<6} {:>7} {:>8} {:>7}", label, name, st.sents, st.events, st.roles).unwrap();
    }
    s
}
