//! Parsing generated sequences back into event records.

use crate::markers::{ARG, IN_SEP, OUT_SEP, TRG, TRIGGER_WORD};
use crate::ontology::EventTypeDef;
use crate::record::{Argument, EventRecord, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedChunk {
    pub trigger_text: String,
    /// Per template slot, the argument texts after " and " splitting.
    pub arg_texts: Vec<Vec<String>>,
    /// False when only the trigger could be recovered.
    pub valid: bool,
}

/// Matches `args` against a stripped argument template. Literal segments
/// between placeholders are anchors located leftmost in order; the first
/// and last segments must match at the ends. Returns one capture per slot.
pub fn align_template(args: &str, template: &str) -> Option<Vec<String>> {
    let segments: Vec<&str> = template.split(ARG).collect();
    let (first, rest) = segments.split_first()?;
    let mut pos = first.len();
    if !args.starts_with(first) {
        return None;
    }
    let Some((last, middle)) = rest.split_last() else {
        return (args == *first).then(Vec::new);
    };
    if args.len() < pos + last.len() || !args.ends_with(last) {
        return None;
    }
    let end_limit = args.len() - last.len();
    let mut captures = Vec::with_capacity(rest.len());
    for anchor in middle {
        // leftmost occurrence leaves the most room for the remaining anchors,
        // so the greedy choice is also the lexicographically first full match
        let found = args.get(pos..end_limit)?.find(anchor)?;
        captures.push(args[pos..pos + found].to_string());
        pos += found + anchor.len();
    }
    if pos > end_limit {
        return None;
    }
    captures.push(args[pos..end_limit].to_string());
    Some(captures)
}

fn split_capture(capture: &str) -> Vec<String> {
    if capture == ARG {
        return Vec::new();
    }
    capture
        .split(" and ")
        .filter(|t| !t.is_empty() && *t != ARG)
        .map(String::from)
        .collect()
}

pub fn parse_output(generated: &str, def: &EventTypeDef) -> Vec<ParsedChunk> {
    let template = def.generation_template();
    let trigger_prefix = format!("{} ", TRIGGER_WORD);
    let in_sep = format!(" {} ", IN_SEP);
    let mut out = Vec::new();
    for chunk in generated.split(&format!(" {} ", OUT_SEP)) {
        let Some(rest) = chunk.strip_prefix(&trigger_prefix) else { continue };
        let (trigger, args) = match rest.split_once(&in_sep) {
            Some((t, a)) => (t, Some(a)),
            None => (rest, None),
        };
        let trigger = trigger.trim();
        if trigger.is_empty() || trigger == TRG {
            continue;
        }
        match args.and_then(|a| align_template(a, &template)) {
            Some(captures) => out.push(ParsedChunk {
                trigger_text: trigger.to_string(),
                arg_texts: captures.iter().map(|c| split_capture(c)).collect(),
                valid: true,
            }),
            None => out.push(ParsedChunk {
                trigger_text: trigger.to_string(),
                arg_texts: Vec::new(),
                valid: false,
            }),
        }
    }
    out
}

/// Start indices of every occurrence of `needle`'s tokens in `context`.
fn occurrences(needle: &str, context: &[String]) -> Vec<usize> {
    let words: Vec<&str> = needle.split_whitespace().collect();
    if words.is_empty() || words.len() > context.len() {
        return Vec::new();
    }
    (0..=context.len() - words.len())
        .filter(|&i| words.iter().zip(&context[i..]).all(|(w, c)| w == c))
        .collect()
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// The k-th chunk carrying a given trigger string takes the k-th occurrence
/// of that string, reusing the last one once they run out; `None` when the
/// string never occurs.
pub fn resolve_trigger_offsets(chunks: &[ParsedChunk], context: &[String]) -> Vec<Option<Span>> {
    let mut seen: Vec<(&str, usize)> = Vec::new();
    chunks
        .iter()
        .map(|c| {
            let k = match seen.iter_mut().find(|(t, _)| *t == c.trigger_text) {
                Some((_, n)) => {
                    *n += 1;
                    *n - 1
                }
                None => {
                    seen.push((&c.trigger_text, 1));
                    0
                }
            };
            let occ = occurrences(&c.trigger_text, context);
            let start = *occ.get(k).or(occ.last())?;
            Some(Span::new(start, start + word_count(&c.trigger_text)))
        })
        .collect()
}

/// Locates `text` nearest to `trigger`, ties to the left.
pub fn nearest_occurrence(text: &str, trigger: Span, context: &[String]) -> Option<Span> {
    let start = occurrences(text, context)
        .into_iter()
        .min_by_key(|&s| (s.abs_diff(trigger.start), s))?;
    Some(Span::new(start, start + word_count(text)))
}

pub fn resolve_argument_offsets(
    chunk: &ParsedChunk,
    trigger: Span,
    def: &EventTypeDef,
    context: &[String],
) -> EventRecord {
    let order = def.slot_order();
    let mut arguments = Vec::new();
    for (slot, texts) in chunk.arg_texts.iter().enumerate() {
        for text in texts {
            let span = nearest_occurrence(text, trigger, context);
            arguments.push(Argument {
                role: order[slot].to_string(),
                span,
                text: match span {
                    Some(s) => context[s.start..s.end].join(" "),
                    None => text.clone(),
                },
            });
        }
    }
    EventRecord {
        event_type: def.type_id.clone(),
        trigger,
        trigger_text: context[trigger.start..trigger.end].join(" "),
        arguments,
    }
}

/// Full path from a generated sequence to resolved records for one subtask.
pub fn extract_records(generated: &str, def: &EventTypeDef, context: &[String]) -> Vec<EventRecord> {
    let chunks = parse_output(generated, def);
    let triggers = resolve_trigger_offsets(&chunks, context);
    chunks
        .iter()
        .zip(triggers)
        .filter_map(|(c, t)| Some(resolve_argument_offsets(c, t?, def, context)))
        .collect()
}
