//! Event records and annotated sentences, with the JSONL wire schema.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token span, end exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Argument {
    pub role: String,
    /// `None` when the text could not be located in the context.
    pub span: Option<Span>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "WireRecord", into = "WireRecord")]
pub struct EventRecord {
    pub event_type: String,
    pub trigger: Span,
    pub trigger_text: String,
    pub arguments: Vec<Argument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceInstance {
    pub doc_id: String,
    pub sent_id: String,
    pub tokens: Vec<String>,
    pub events: Vec<EventRecord>,
}

#[derive(Serialize, Deserialize)]
struct WireSpan {
    start: i64,
    end: i64,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct WireArg {
    start: i64,
    end: i64,
    text: String,
    role: String,
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    #[serde(rename = "type")]
    event_type: String,
    trigger: WireSpan,
    args: Vec<WireArg>,
}

/// Negative offsets in the wire format mark an unresolved span; they can
/// only be produced for arguments, and validation rejects them for triggers.
fn span_from_wire(start: i64, end: i64) -> Option<Span> {
    if start < 0 || end < 0 {
        None
    } else {
        Some(Span::new(start as usize, end as usize))
    }
}

fn span_to_wire(span: Option<Span>) -> (i64, i64) {
    match span {
        Some(s) => (s.start as i64, s.end as i64),
        None => (-1, -1),
    }
}

impl From<WireRecord> for EventRecord {
    fn from(w: WireRecord) -> Self {
        // an invalid trigger becomes an empty span, which `validate` rejects
        let trigger = span_from_wire(w.trigger.start, w.trigger.end).unwrap_or(Span::new(0, 0));
        EventRecord {
            event_type: w.event_type,
            trigger,
            trigger_text: w.trigger.text,
            arguments: w
                .args
                .into_iter()
                .map(|a| Argument {
                    role: a.role,
                    span: span_from_wire(a.start, a.end),
                    text: a.text,
                })
                .collect(),
        }
    }
}

impl From<EventRecord> for WireRecord {
    fn from(r: EventRecord) -> Self {
        WireRecord {
            event_type: r.event_type,
            trigger: WireSpan {
                start: r.trigger.start as i64,
                end: r.trigger.end as i64,
                text: r.trigger_text,
            },
            args: r
                .arguments
                .into_iter()
                .map(|a| {
                    let (start, end) = span_to_wire(a.span);
                    WireArg {
                        start,
                        end,
                        text: a.text,
                        role: a.role,
                    }
                })
                .collect(),
        }
    }
}

/// Tokens of `span` joined by single spaces.
pub fn span_text(tokens: &[String], span: Span) -> String {
    tokens[span.start..span.end].join(" ")
}

fn check_span(span: Span, n: usize, what: &str) -> Result<()> {
    if span.start >= span.end || span.end > n {
        return Err(Error::Validation(format!(
            "{} span ({}, {}) invalid for {} tokens",
            what, span.start, span.end, n
        )));
    }
    Ok(())
}

impl EventRecord {
    /// Checks every resolved span lies within `n_tokens` and is nonempty.
    pub fn validate(&self, n_tokens: usize) -> Result<()> {
        check_span(self.trigger, n_tokens, "trigger")?;
        for a in &self.arguments {
            if let Some(s) = a.span {
                check_span(s, n_tokens, &format!("argument `{}`", a.role))?;
            }
        }
        Ok(())
    }
}

impl SentenceInstance {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn is_relevant(&self) -> bool {
        !self.events.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.events {
            e.validate(self.tokens.len())?;
            if span_text(&self.tokens, e.trigger) != e.trigger_text {
                return Err(Error::Validation(format!(
                    "trigger text `{}` does not match its span",
                    e.trigger_text
                )));
            }
        }
        Ok(())
    }

    /// Context identity used to align predictions with gold.
    pub fn key(&self) -> (String, String) {
        (self.doc_id.clone(), self.sent_id.clone())
    }
}
