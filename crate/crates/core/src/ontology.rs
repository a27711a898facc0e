//! Event ontology: event types, their argument templates and slot mappings.
//!
//! File format (UTF-8 JSON):
//!
//! ```json
//! {"name": "ACE05", "types": [{"type": "Contact:Meet",
//!   "template": "<arg1> met with <arg2> in <arg3> place",
//!   "roles": {"arg1": "Entity", "arg2": "Entity", "arg3": "Place"}}]}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markers::ARG;

pub const ACE_ONTOLOGY_JSON: &str = include_str!("../data/ontologies/ace.json");
pub const ERE_ONTOLOGY_JSON: &str = include_str!("../data/ontologies/ere.json");
pub const TOY_ONTOLOGY_JSON: &str = include_str!("../data/ontologies/toy.json");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTypeDef {
    pub type_id: String,
    pub surface_name: String,
    pub raw_template: String,
    /// Placeholder name (`arg1`, `arg2`, ...) to role.
    pub slot_map: BTreeMap<String, String>,
    /// Placeholder numbers in left-to-right template order.
    placeholder_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventOntology {
    pub name: String,
    pub types: Vec<EventTypeDef>,
}

#[derive(Serialize, Deserialize)]
struct OntologyFile {
    name: String,
    types: Vec<TypeEntry>,
}

#[derive(Serialize, Deserialize)]
struct TypeEntry {
    #[serde(rename = "type")]
    type_id: String,
    template: String,
    roles: BTreeMap<String, String>,
}

/// A `<argN>` occurrence: byte range and its number.
struct Placeholder {
    start: usize,
    end: usize,
    number: usize,
}

/// Finds every `<argN>` (N one or more ASCII digits) in `text`.
fn scan_placeholders(text: &str) -> Vec<Placeholder> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i + 4 < bytes.len() {
        if &bytes[i..i + 4] == b"<arg" {
            let mut j = i + 4;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j > i + 4 && j < bytes.len() && bytes[j] == b'>' {
                let number = text[i + 4..j].parse().unwrap_or(usize::MAX);
                out.push(Placeholder {
                    start: i,
                    end: j + 1,
                    number,
                });
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Replaces every numbered placeholder `<argN>` with the bare `<arg>`;
/// all other bytes are kept as they are.
pub fn strip_numeric_labels(raw_template: &str) -> String {
    let mut out = String::with_capacity(raw_template.len());
    let mut last = 0;
    for p in scan_placeholders(raw_template) {
        out.push_str(&raw_template[last..p.start]);
        out.push_str(ARG);
        last = p.end;
    }
    out.push_str(&raw_template[last..]);
    out
}

/// Text after the last `:` of a type id, e.g. `Justice:Arrest-Jail` → `Arrest-Jail`.
pub fn surface_name(type_id: &str) -> &str {
    type_id.rsplit(':').next().unwrap_or(type_id)
}

impl EventTypeDef {
    pub fn new(
        type_id: impl Into<String>,
        raw_template: impl Into<String>,
        slot_map: BTreeMap<String, String>,
    ) -> Result<Self> {
        let type_id = type_id.into();
        let raw_template = raw_template.into();
        let mismatch = |detail: String| Error::SlotMismatch {
            type_id: type_id.clone(),
            detail,
        };
        let placeholders = scan_placeholders(&raw_template);
        let mut seen = HashSet::new();
        for p in &placeholders {
            if !seen.insert(p.number) {
                return Err(mismatch(format!("placeholder <arg{}> repeated", p.number)));
            }
            if !slot_map.contains_key(&format!("arg{}", p.number)) {
                return Err(mismatch(format!("<arg{}> has no role mapping", p.number)));
            }
        }
        for key in slot_map.keys() {
            let n = key
                .strip_prefix("arg")
                .and_then(|d| d.parse::<usize>().ok())
                .ok_or_else(|| mismatch(format!("role key `{}` is not of the form argN", key)))?;
            if !seen.contains(&n) {
                return Err(mismatch(format!("role key `{}` has no placeholder in template", key)));
            }
        }
        for n in 1..=placeholders.len() {
            if !seen.contains(&n) {
                return Err(mismatch(format!(
                    "placeholders not numbered contiguously from 1 (missing <arg{}>)",
                    n
                )));
            }
        }
        Ok(Self {
            surface_name: surface_name(&type_id).to_string(),
            placeholder_order: placeholders.iter().map(|p| p.number).collect(),
            type_id,
            raw_template,
            slot_map,
        })
    }

    /// Roles in the order their placeholders appear in the template.
    pub fn slot_order(&self) -> Vec<&str> {
        self.placeholder_order
            .iter()
            .map(|n| self.slot_map[&format!("arg{}", n)].as_str())
            .collect()
    }

    pub fn num_slots(&self) -> usize {
        self.placeholder_order.len()
    }

    /// Template with numeric labels removed.
    pub fn generation_template(&self) -> String {
        strip_numeric_labels(&self.raw_template)
    }
}

impl EventOntology {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: OntologyFile =
            serde_json::from_str(text).map_err(|e| Error::MalformedOntology(e.to_string()))?;
        let mut seen = HashSet::new();
        let mut types = Vec::with_capacity(file.types.len());
        for entry in file.types {
            if !seen.insert(entry.type_id.clone()) {
                return Err(Error::DuplicateType {
                    type_id: entry.type_id,
                });
            }
            types.push(EventTypeDef::new(entry.type_id, entry.template, entry.roles)?);
        }
        Ok(Self {
            name: file.name,
            types,
        })
    }

    pub fn to_json_string(&self) -> String {
        let file = OntologyFile {
            name: self.name.clone(),
            types: self
                .types
                .iter()
                .map(|t| TypeEntry {
                    type_id: t.type_id.clone(),
                    template: t.raw_template.clone(),
                    roles: t.slot_map.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("ontology serializes")
    }

    pub fn toy() -> Self {
        Self::from_json_str(TOY_ONTOLOGY_JSON).expect("bundled toy ontology is valid")
    }

    pub fn ace() -> Self {
        Self::from_json_str(ACE_ONTOLOGY_JSON).expect("bundled ACE ontology is valid")
    }

    pub fn ere() -> Self {
        Self::from_json_str(ERE_ONTOLOGY_JSON).expect("bundled ERE ontology is valid")
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn index_of(&self, type_id: &str) -> Option<usize> {
        self.types.iter().position(|t| t.type_id == type_id)
    }

    pub fn get(&self, type_id: &str) -> Option<&EventTypeDef> {
        self.types.iter().find(|t| t.type_id == type_id)
    }

    /// Restricts the ontology to `type_ids`, preserving the original order.
    pub fn subset(&self, type_ids: &[&str]) -> Result<Self> {
        for t in type_ids {
            if self.get(t).is_none() {
                return Err(Error::UnknownEventType(t.to_string()));
            }
        }
        Ok(Self {
            name: self.name.clone(),
            types: self
                .types
                .iter()
                .filter(|t| type_ids.contains(&t.type_id.as_str()))
                .cloned()
                .collect(),
        })
    }
}

pub fn load_ontology(path: &Path) -> Result<EventOntology> {
    let text = std::fs::read_to_string(path)?;
    EventOntology::from_json_str(&text)
}
