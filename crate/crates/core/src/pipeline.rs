//! Dataset-level prediction: context filtering, per-type decoding and
//! record extraction.

use crate::error::{Error, Result};
use crate::model::{Decoding, GenModel};
use crate::prefix::PrefixMode;
use crate::record::{EventRecord, SentenceInstance};

/// Decodes every (context, type) subtask for the kept contexts. Types run
/// in ontology order (restricted to `types` when given); dropped contexts
/// get no records.
pub fn predict_dataset(
    model: &GenModel,
    contexts: &[SentenceInstance],
    keep: &[bool],
    mode: PrefixMode,
    decoding: Decoding,
    types: Option<&[usize]>,
) -> Result<Vec<SentenceInstance>> {
    if keep.len() != contexts.len() {
        return Err(Error::Contract(format!(
            "{} filter decisions for {} contexts",
            keep.len(),
            contexts.len()
        )));
    }
    let all: Vec<usize> = (0..model.n_types()).collect();
    let types = types.unwrap_or(&all);
    if let Some(&bad) = types.iter().find(|&&t| t >= model.n_types()) {
        return Err(Error::Contract(format!("type index {} out of range", bad)));
    }
    contexts
        .iter()
        .zip(keep)
        .map(|(ctx, &kept)| {
            let mut events: Vec<EventRecord> = Vec::new();
            if kept {
                for &t in types {
                    events.extend(model.predict_subtask(&ctx.tokens, t, mode, decoding)?.1);
                }
            }
            Ok(SentenceInstance {
                doc_id: ctx.doc_id.clone(),
                sent_id: ctx.sent_id.clone(),
                tokens: ctx.tokens.clone(),
                events,
            })
        })
        .collect()
}

/// Clears the records of contexts a filter dropped.
pub fn apply_filter(predictions: &[SentenceInstance], keep: &[bool]) -> Vec<SentenceInstance> {
    predictions
        .iter()
        .zip(keep)
        .map(|(p, &k)| {
            let mut p = p.clone();
            if !k {
                p.events.clear();
            }
            p
        })
        .collect()
}
