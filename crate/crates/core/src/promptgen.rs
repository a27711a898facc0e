//! Prompt construction and ground-truth serialization.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::markers::{ARG, IN_SEP, OUT_SEP, SEP, TRG, TRIGGER_WORD};
use crate::ontology::{EventOntology, EventTypeDef};
use crate::record::{span_text, EventRecord, SentenceInstance};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub event_type: String,
    pub instruction: String,
    pub template: String,
    pub full_text: String,
}

/// One generation subtask: a (context, event type) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub input: String,
    pub target: String,
    pub event_type: String,
    pub type_index: usize,
    pub context_index: usize,
}

impl TrainingInstance {
    /// True when the target contains at least one event.
    pub fn is_positive(&self) -> bool {
        self.target != empty_target()
    }
}

pub fn empty_target() -> String {
    format!("{} {}", TRIGGER_WORD, TRG)
}

pub fn build_prompt(def: &EventTypeDef) -> Prompt {
    let instruction = format!("Event type is {}.", def.surface_name);
    let template = format!(
        "{} {} {} {}",
        TRIGGER_WORD,
        TRG,
        IN_SEP,
        def.generation_template()
    );
    let full_text = format!("{} {}", instruction, template);
    Prompt {
        event_type: def.type_id.clone(),
        instruction,
        template,
        full_text,
    }
}

/// Model input for one subtask: prompt, separator, detokenized context.
pub fn build_input(prompt: &Prompt, context: &[String]) -> String {
    if context.is_empty() {
        format!("{} {}", prompt.full_text, SEP)
    } else {
        format!("{} {} {}", prompt.full_text, SEP, context.join(" "))
    }
}

/// Fills `template` (a stripped generation template) slot by slot; `None`
/// keeps the literal placeholder.
pub fn fill_template(template: &str, fills: &[Option<String>]) -> String {
    let segments: Vec<&str> = template.split(ARG).collect();
    debug_assert_eq!(segments.len(), fills.len() + 1);
    let mut out = String::from(segments[0]);
    for (seg, fill) in segments[1..].iter().zip(fills) {
        out.push_str(fill.as_deref().unwrap_or(ARG));
        out.push_str(seg);
    }
    out
}

/// Slot fills for one record. Arguments of a role are sorted by span; when
/// a role owns several slots they take one argument each in template order
/// and any overflow is joined with " and " into the role's last slot.
/// Roles absent from the template are not rendered.
fn slot_fills(record: &EventRecord, def: &EventTypeDef, context: &[String]) -> Vec<Option<String>> {
    let order = def.slot_order();
    let mut by_role: BTreeMap<&str, Vec<(usize, usize, String)>> = BTreeMap::new();
    for a in &record.arguments {
        let (key, text) = match a.span {
            Some(s) => ((s.start, s.end), span_text(context, s)),
            None => ((usize::MAX, usize::MAX), a.text.clone()),
        };
        by_role.entry(a.role.as_str()).or_default().push((key.0, key.1, text));
    }
    for list in by_role.values_mut() {
        list.sort();
    }
    let mut fills = vec![None; order.len()];
    for (role, args) in by_role {
        let slots: Vec<usize> = (0..order.len()).filter(|&i| order[i] == role).collect();
        let Some(&last) = slots.last() else { continue };
        let mut texts = args.into_iter().map(|(_, _, t)| t);
        for &slot in &slots[..slots.len() - 1] {
            fills[slot] = texts.next();
        }
        let rest: Vec<String> = texts.collect();
        if !rest.is_empty() {
            fills[last] = Some(rest.join(" and "));
        }
    }
    fills
}

pub fn serialize_ground_truth(
    records: &[EventRecord],
    def: &EventTypeDef,
    context: &[String],
) -> Result<String> {
    if records.is_empty() {
        return Ok(empty_target());
    }
    for r in records {
        if r.event_type != def.type_id {
            return Err(Error::Contract(format!(
                "record of type `{}` serialized with template of `{}`",
                r.event_type, def.type_id
            )));
        }
        r.validate(context.len())
            .map_err(|e| Error::Contract(e.to_string()))?;
    }
    let mut sorted: Vec<&EventRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.trigger.start, r.trigger.end));
    let template = def.generation_template();
    let chunks: Vec<String> = sorted
        .into_iter()
        .map(|r| {
            format!(
                "{} {} {} {}",
                TRIGGER_WORD,
                span_text(context, r.trigger),
                IN_SEP,
                fill_template(&template, &slot_fills(r, def, context))
            )
        })
        .collect();
    Ok(chunks.join(&format!(" {} ", OUT_SEP)))
}

/// One instance per (context, event type) pair, contexts outer, types in
/// ontology order.
pub fn build_training_instances(
    dataset: &[SentenceInstance],
    ontology: &EventOntology,
) -> Result<Vec<TrainingInstance>> {
    let prompts: Vec<Prompt> = ontology.types.iter().map(build_prompt).collect();
    let mut out = Vec::with_capacity(dataset.len() * ontology.len());
    for (ci, sent) in dataset.iter().enumerate() {
        for e in &sent.events {
            if ontology.get(&e.event_type).is_none() {
                return Err(Error::UnknownEventType(e.event_type.clone()));
            }
        }
        for (ti, def) in ontology.types.iter().enumerate() {
            let records: Vec<EventRecord> = sent
                .events
                .iter()
                .filter(|e| e.event_type == def.type_id)
                .cloned()
                .collect();
            out.push(TrainingInstance {
                input: build_input(&prompts[ti], &sent.tokens),
                target: serialize_ground_truth(&records, def, &sent.tokens)?,
                event_type: def.type_id.clone(),
                type_index: ti,
                context_index: ci,
            });
        }
    }
    Ok(out)
}
