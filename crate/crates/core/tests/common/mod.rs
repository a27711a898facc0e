//! Oracles and fixtures shared by the integration tests and the acceptance
//! target. Each oracle is written independently of the library code it
//! checks.
#![allow(dead_code)]

pub mod checks;

use eventgen::ontology::EventOntology;
use eventgen::outparse::extract_records;
use eventgen::promptgen::serialize_ground_truth;
use eventgen::record::{Argument, EventRecord, SentenceInstance, Span};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type CanonRecord = (String, Span, Vec<(String, Option<Span>, String)>);

/// Order-free view of a record list.
pub fn canonical(records: &[EventRecord]) -> Vec<CanonRecord> {
    let mut out: Vec<CanonRecord> = records
        .iter()
        .map(|r| {
            let mut args: Vec<_> = r
                .arguments
                .iter()
                .map(|a| (a.role.clone(), a.span, a.text.clone()))
                .collect();
            args.sort();
            (r.event_type.clone(), r.trigger, args)
        })
        .collect();
    out.sort();
    out
}

/// Serializes every (sentence, type) subtask, parses it back and counts the
/// sentences whose records are not reproduced exactly.
pub fn round_trip_failures(data: &[SentenceInstance], ontology: &EventOntology) -> Vec<String> {
    let mut failures = Vec::new();
    for s in data {
        let mut recovered = Vec::new();
        for def in &ontology.types {
            let gold: Vec<EventRecord> = s
                .events
                .iter()
                .filter(|e| e.event_type == def.type_id)
                .cloned()
                .collect();
            let text = serialize_ground_truth(&gold, def, &s.tokens).expect("gold serializes");
            recovered.extend(extract_records(&text, def, &s.tokens));
        }
        if canonical(&recovered) != canonical(&s.events) {
            failures.push(format!("{}: {}", s.sent_id, s.tokens.join(" ")));
        }
    }
    failures
}

/// Nested-loop one-to-one matcher: every prediction scans the gold list for
/// the first unconsumed equal key.
pub fn nested_loop_matches<K: PartialEq>(pred: &[K], gold: &[K]) -> usize {
    let mut consumed = vec![false; gold.len()];
    let mut tp = 0;
    for p in pred {
        for (j, g) in gold.iter().enumerate() {
            if !consumed[j] && p == g {
                consumed[j] = true;
                tp += 1;
                break;
            }
        }
    }
    tp
}

pub fn trigger_keys(records: &[EventRecord]) -> Vec<(usize, usize, String)> {
    records
        .iter()
        .map(|r| (r.trigger.start, r.trigger.end, r.event_type.clone()))
        .collect()
}

pub fn argument_keys(records: &[EventRecord]) -> Vec<(usize, usize, String, String)> {
    let mut out = Vec::new();
    for r in records {
        for a in &r.arguments {
            if let Some(s) = a.span {
                out.push((s.start, s.end, r.event_type.clone(), a.role.clone()));
            }
        }
    }
    out
}

/// Small random record lists over a narrow key space so that collisions and
/// duplicates are frequent.
pub fn random_records(rng: &mut ChaCha8Rng, max_records: usize) -> Vec<EventRecord> {
    let types = ["A", "B", "C"];
    let roles = ["R", "S"];
    let n = rng.random_range(0..=max_records);
    (0..n)
        .map(|_| {
            let start = rng.random_range(0..4);
            let n_args = rng.random_range(0..3);
            EventRecord {
                event_type: types[rng.random_range(0..types.len())].into(),
                trigger: Span::new(start, start + rng.random_range(1..3)),
                trigger_text: "t".into(),
                arguments: (0..n_args)
                    .map(|_| {
                        let s = rng.random_range(0..4);
                        Argument {
                            role: roles[rng.random_range(0..roles.len())].into(),
                            span: if rng.random_bool(0.1) {
                                None
                            } else {
                                Some(Span::new(s, s + rng.random_range(1..3)))
                            },
                            text: "a".into(),
                        }
                    })
                    .collect(),
            }
        })
        .collect()
}

use eventgen::numeric::ParamStore;
use eventgen::seq2seq::{ModelConfig, Seq2Seq};
use rand::SeedableRng;

pub fn random_model(vocab_size: usize, d_model: usize, n_layers: usize, n_heads: usize, seed: u64) -> (Seq2Seq, ParamStore) {
    let cfg = ModelConfig {
        vocab_size,
        d_model,
        n_layers,
        n_heads,
        d_ff: 2 * d_model,
        max_len: 24,
        prefix_cross_attention: false,
    };
    let model = Seq2Seq::new(cfg).unwrap();
    let mut store = ParamStore::new();
    model.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    (model, store)
}

/// Random ids with a length drawn from `lens`.
pub fn random_ids(rng: &mut ChaCha8Rng, vocab: usize, lens: std::ops::Range<usize>) -> Vec<usize> {
    let len = rng.random_range(lens);
    (0..len).map(|_| rng.random_range(0..vocab)).collect()
}
