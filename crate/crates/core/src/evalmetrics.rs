//! Trigger (Trg-C) and argument (Arg-C) classification scores.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{EventRecord, SentenceInstance, Span};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub pred: usize,
    pub gold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub trg: Prf,
    pub arg: Prf,
    pub trg_counts: Counts,
    pub arg_counts: Counts,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.pred += other.pred;
        self.gold += other.gold;
    }

    pub fn prf(&self) -> Prf {
        let p = if self.pred == 0 { 0.0 } else { self.tp as f64 / self.pred as f64 };
        let r = if self.gold == 0 { 0.0 } else { self.tp as f64 / self.gold as f64 };
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Prf { p, r, f1 }
    }
}

/// Size of the multiset intersection of `pred` and `gold`.
fn one_to_one<K: Eq + Hash>(pred: impl IntoIterator<Item = K>, gold: impl IntoIterator<Item = K>) -> usize {
    let mut avail: HashMap<K, usize> = HashMap::new();
    for k in gold {
        *avail.entry(k).or_default() += 1;
    }
    let mut tp = 0;
    for k in pred {
        if let Some(n) = avail.get_mut(&k) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    tp
}

fn trigger_keys(records: &[EventRecord]) -> impl Iterator<Item = (Span, &str)> {
    records.iter().map(|r| (r.trigger, r.event_type.as_str()))
}

fn argument_keys(records: &[EventRecord]) -> impl Iterator<Item = (Span, &str, &str)> {
    records.iter().flat_map(|r| {
        r.arguments
            .iter()
            .filter_map(move |a| Some((a.span?, r.event_type.as_str(), a.role.as_str())))
    })
}

pub fn match_triggers(pred: &[EventRecord], gold: &[EventRecord]) -> usize {
    one_to_one(trigger_keys(pred), trigger_keys(gold))
}

/// Unresolved predicted spans never match.
pub fn match_arguments(pred: &[EventRecord], gold: &[EventRecord]) -> usize {
    one_to_one(argument_keys(pred), argument_keys(gold))
}

pub fn num_arguments(records: &[EventRecord]) -> usize {
    records.iter().map(|r| r.arguments.len()).sum()
}

/// Counts for one context.
pub fn score_context(pred: &[EventRecord], gold: &[EventRecord]) -> (Counts, Counts) {
    (
        Counts {
            tp: match_triggers(pred, gold),
            pred: pred.len(),
            gold: gold.len(),
        },
        Counts {
            tp: match_arguments(pred, gold),
            pred: num_arguments(pred),
            gold: num_arguments(gold),
        },
    )
}

impl ScoreReport {
    pub fn from_counts(trg_counts: Counts, arg_counts: Counts) -> Self {
        Self {
            trg: trg_counts.prf(),
            arg: arg_counts.prf(),
            trg_counts,
            arg_counts,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<6} {:>7} {:>7} {:>7} {:>6} {:>6} {:>6}", "", "P", "R", "F1", "TP", "Pred", "Gold").unwrap();
        for (name, prf, c) in [("Trg-C", self.trg, self.trg_counts), ("Arg-C", self.arg, self.arg_counts)] {
            writeln!(
                s,
                "{:<6} {:>7.2} {:>7.2} {:>7.2} {:>6} {:>6} {:>6}",
                name,
                prf.p * 100.0,
                prf.r * 100.0,
                prf.f1 * 100.0,
                c.tp,
                c.pred,
                c.gold
            )
            .unwrap();
        }
        s
    }
}

/// Micro-averaged scores over contexts matched by (doc_id, sent_id).
pub fn score_dataset(predictions: &[SentenceInstance], gold: &[SentenceInstance]) -> Result<ScoreReport> {
    let mut gold_by_key: BTreeMap<(String, String), &SentenceInstance> = BTreeMap::new();
    for g in gold {
        if gold_by_key.insert(g.key(), g).is_some() {
            return Err(Error::Contract(format!("duplicate gold context {:?}", g.key())));
        }
    }
    if predictions.len() != gold.len() {
        return Err(Error::Contract(format!(
            "{} predicted contexts for {} gold contexts",
            predictions.len(),
            gold.len()
        )));
    }
    let mut trg = Counts::default();
    let mut arg = Counts::default();
    let mut used = std::collections::HashSet::new();
    for p in predictions {
        let key = p.key();
        let g = gold_by_key
            .get(&key)
            .ok_or_else(|| Error::Contract(format!("predicted context {:?} has no gold counterpart", key)))?;
        if !used.insert(key.clone()) {
            return Err(Error::Contract(format!("duplicate predicted context {:?}", key)));
        }
        let (t, a) = score_context(&p.events, &g.events);
        trg.add(t);
        arg.add(a);
    }
    Ok(ScoreReport::from_counts(trg, arg))
}
