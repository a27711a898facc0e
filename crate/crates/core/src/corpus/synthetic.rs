//! Templated synthetic sentences with planted event records.
//!
//! Entity strings avoid every word of the shipped templates and the word
//! "and", so serialized ground truth parses back without ambiguity. Each
//! sentence is checked for unique argument occurrences and resampled when
//! the check fails.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::markers::ARG;
use crate::ontology::{EventOntology, EventTypeDef};
use crate::record::{Argument, EventRecord, SentenceInstance, Span};

/// Entity pools keyed by the variable prefix used in sentence patterns.
pub const ENTITY_POOLS: &[(&str, &[&str])] = &[
    (
        "p",
        &[
            "the man", "Maria Lopez", "John Smith", "Ahmed Hassan", "Li Wei", "Anna Petrova",
            "Carlos Diaz", "Fatima Ali", "Peter Brown", "Yuki Tanaka", "Omar Khalid", "Sara Cohen",
            "David Kim", "Elena Rossi", "Samuel Okafor", "Nadia Haddad",
        ],
    ),
    (
        "g",
        &[
            "bounty hunters", "police officers", "the rebels", "federal agents", "the militia",
            "border guards", "soldiers", "the insurgents", "local police", "security forces",
        ],
    ),
    (
        "l",
        &[
            "Los Angeles", "Mexico", "Baghdad", "Paris", "Cairo", "Kabul", "New York", "Lagos",
            "Madrid", "Moscow", "Tokyo", "Beirut", "Chicago", "Karachi", "Berlin", "Nairobi",
        ],
    ),
    (
        "v",
        &["a truck", "a helicopter", "a train", "a private jet", "a bus", "a boat", "a cargo plane"],
    ),
    (
        "w",
        &["rifles", "a car bomb", "rockets", "grenades", "a knife", "artillery", "mortars"],
    ),
    (
        "x",
        &[
            "the embassy", "a checkpoint", "the convoy", "an army base", "the airport", "a market",
            "the police station",
        ],
    ),
    (
        "d",
        &["Tuesday", "Monday", "last week", "Friday", "yesterday", "Sunday", "last night"],
    ),
    ("y", &["1975", "1982", "1990", "1968", "2001", "1957"]),
];

/// Words that appear only in irrelevant sentences.
pub const IRRELEVANT_CUES: &[&str] = &["weather", "concert", "Stocks", "recipe", "museum", "garden"];

const IRRELEVANT_PATTERNS: &[&str] = &[
    "The weather in {l1} was mild on {d1} .",
    "A concert in {l1} drew large crowds over the weekend .",
    "{p1} shared a recipe for lentil soup with friends .",
    "Stocks in {l1} rose sharply on {d1} after the report .",
    "The museum in {l1} opened a new wing devoted to maps .",
    "{p1} spent {d1} working quietly in the garden .",
    "The weather forecast for {l1} calls for heavy rain .",
    "{p1} bought tickets for a concert in {l1} .",
];

struct EventSpec {
    event_type: &'static str,
    triggers: &'static [&'static str],
    roles: &'static [(&'static str, &'static str)],
}

struct Pattern {
    text: &'static str,
    events: &'static [EventSpec],
}

const fn ev(
    event_type: &'static str,
    triggers: &'static [&'static str],
    roles: &'static [(&'static str, &'static str)],
) -> EventSpec {
    EventSpec {
        event_type,
        triggers,
        roles,
    }
}

const TRANSPORT: &str = "Movement:Transport";
const ARREST: &str = "Justice:Arrest-Jail";
const MEET: &str = "Contact:Meet";
const ATTACK: &str = "Conflict:Attack";
const BORN: &str = "Life:Be-Born";

/// `{t0}`/`{t1}` are the triggers of the first/second event.
const PATTERNS: &[Pattern] = &[
    Pattern {
        text: "{p1} {t0} to {l1} from {l2} on {d1} .",
        events: &[ev(TRANSPORT, &["returned", "traveled", "moved", "flew"], &[
            ("Artifact", "p1"), ("Destination", "l1"), ("Origin", "l2"),
        ])],
    },
    Pattern {
        text: "{g1} {t0} {p1} to {l1} in {v1} .",
        events: &[ev(TRANSPORT, &["sent", "shipped", "moved", "drove"], &[
            ("Agent", "g1"), ("Artifact", "p1"), ("Destination", "l1"), ("Vehicle", "v1"),
        ])],
    },
    Pattern {
        text: "{p1} {t0} from {l1} to {l2} aboard {v1} last month .",
        events: &[ev(TRANSPORT, &["traveled", "flew", "went"], &[
            ("Artifact", "p1"), ("Origin", "l1"), ("Destination", "l2"), ("Vehicle", "v1"),
        ])],
    },
    Pattern {
        text: "{g1} {t0} {p1} in {l1} on {d1} .",
        events: &[ev(ARREST, &["arrested", "detained", "captured", "jailed"], &[
            ("Agent", "g1"), ("Person", "p1"), ("Place", "l1"),
        ])],
    },
    Pattern {
        text: "{p1} was {t0} by {g1} near {l1} .",
        events: &[ev(ARREST, &["detained", "arrested", "captured"], &[
            ("Person", "p1"), ("Agent", "g1"), ("Place", "l1"),
        ])],
    },
    Pattern {
        text: "{p1} {t0} {p2} in {l1} on {d1} .",
        events: &[ev(MEET, &["met", "visited"], &[
            ("Entity", "p1"), ("Entity", "p2"), ("Place", "l1"),
        ])],
    },
    Pattern {
        text: "{p1} and {p2} held {t0} in {l1} last month .",
        events: &[ev(MEET, &["talks", "meetings", "negotiations"], &[
            ("Entity", "p1"), ("Entity", "p2"), ("Place", "l1"),
        ])],
    },
    Pattern {
        text: "{g1} {t0} {x1} with {w1} on {d1} .",
        events: &[ev(ATTACK, &["attacked", "bombed", "shelled", "struck"], &[
            ("Attacker", "g1"), ("Target", "x1"), ("Instrument", "w1"),
        ])],
    },
    Pattern {
        text: "{p1} was {t0} in {l1} by {g1} using {w1} .",
        events: &[ev(ATTACK, &["shot", "wounded", "stabbed"], &[
            ("Victim", "p1"), ("Place", "l1"), ("Attacker", "g1"), ("Instrument", "w1"),
        ])],
    },
    Pattern {
        text: "{p1} was {t0} in {l1} in {y1} .",
        events: &[ev(BORN, &["born"], &[("Person", "p1"), ("Place", "l1")])],
    },
    Pattern {
        text: "{p1} , who was {t0} in {l1} , studied law .",
        events: &[ev(BORN, &["born"], &[("Person", "p1"), ("Place", "l1")])],
    },
    // the introductory two-event example: the same person moves and is arrested
    Pattern {
        text: "{p1} {t0} to {l1} from {l2} following his {t1} by {g1} .",
        events: &[
            ev(TRANSPORT, &["returned"], &[("Artifact", "p1"), ("Destination", "l1"), ("Origin", "l2")]),
            ev(ARREST, &["capture", "arrest"], &[("Person", "p1"), ("Agent", "g1")]),
        ],
    },
    Pattern {
        text: "{p1} {t0} to {l1} to {t1} {p2} .",
        events: &[
            ev(TRANSPORT, &["traveled", "flew"], &[("Artifact", "p1"), ("Destination", "l1")]),
            ev(MEET, &["meet", "visit"], &[("Entity", "p1"), ("Entity", "p2"), ("Place", "l1")]),
        ],
    },
    Pattern {
        text: "{g1} {t0} {p1} after the {t1} on {x1} in {l1} .",
        events: &[
            ev(ARREST, &["arrested", "detained"], &[("Agent", "g1"), ("Person", "p1"), ("Place", "l1")]),
            ev(ATTACK, &["attack", "bombing"], &[("Attacker", "p1"), ("Target", "x1"), ("Place", "l1")]),
        ],
    },
];

/// Share of relevant sentences drawn from two-event patterns.
const MULTI_EVENT_RATE: f64 = 0.15;
const MAX_ATTEMPTS: usize = 1000;

/// Lower-cased words of a template's literal text.
pub fn template_words(def: &EventTypeDef) -> HashSet<String> {
    def.generation_template()
        .split(ARG)
        .flat_map(|seg| seg.split_whitespace())
        .map(|w| w.to_lowercase())
        .collect()
}

fn pool(var: &str) -> &'static [&'static str] {
    let key = &var[..1];
    ENTITY_POOLS
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, p)| *p)
        .unwrap_or_else(|| panic!("no pool for variable `{}`", var))
}

fn pool_for_role(role: &str) -> &'static str {
    match role {
        "Place" | "Origin" | "Destination" => "l",
        "Vehicle" => "v",
        "Instrument" => "w",
        "Time" => "d",
        "Target" => "x",
        r if r.contains("Org") || r == "Agent" || r == "Attacker" => "g",
        _ => "p",
    }
}

/// A pattern instantiated as tokens with the token span of each variable.
struct Realized {
    tokens: Vec<String>,
    spans: Vec<(String, Span)>,
}

fn realize(text: &str, values: &[(String, String)]) -> Realized {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    for word in text.split_whitespace() {
        if let Some(var) = word.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
            let value = &values.iter().find(|(k, _)| k == var).expect("bound variable").1;
            let start = tokens.len();
            tokens.extend(value.split_whitespace().map(String::from));
            spans.push((var.to_string(), Span::new(start, tokens.len())));
        } else {
            tokens.push(word.to_string());
        }
    }
    Realized { tokens, spans }
}

fn variables(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .filter_map(|w| w.strip_prefix('{').and_then(|w| w.strip_suffix('}')))
        .collect()
}

/// Binds every entity variable to a distinct pool entry.
fn bind_entities(text: &str, rng: &mut ChaCha8Rng) -> Vec<(String, String)> {
    let mut used = HashSet::new();
    let mut out = Vec::new();
    for var in variables(text) {
        if var.starts_with('t') || out.iter().any(|(k, _): &(String, String)| k == var) {
            continue;
        }
        let choice = loop {
            let c = *pool(var).choose(rng).expect("nonempty pool");
            if used.insert(c) {
                break c;
            }
        };
        out.push((var.to_string(), choice.to_string()));
    }
    out
}

fn occurrences(needle: &[String], hay: &[String]) -> usize {
    if needle.is_empty() || needle.len() > hay.len() {
        return 0;
    }
    hay.windows(needle.len()).filter(|w| *w == needle).count()
}

/// Arguments must occur exactly once, contain neither " and " nor any word
/// of their type's template, and triggers must occur exactly once.
fn passes_self_check(sent: &SentenceInstance, ontology: &EventOntology) -> bool {
    for e in &sent.events {
        let trig = &sent.tokens[e.trigger.start..e.trigger.end];
        if occurrences(trig, &sent.tokens) != 1 {
            return false;
        }
        let banned = template_words(ontology.get(&e.event_type).expect("known type"));
        for a in &e.arguments {
            let Some(span) = a.span else { return false };
            let words = &sent.tokens[span.start..span.end];
            if occurrences(words, &sent.tokens) != 1
                || words.iter().any(|w| w == "and" || banned.contains(&w.to_lowercase()))
            {
                return false;
            }
        }
    }
    true
}

/// Event type and (role, variable) pairs for each event of a sentence.
type EventBindings = Vec<(String, Vec<(String, String)>)>;

fn make_records(realized: &Realized, events: &EventBindings) -> Vec<EventRecord> {
    let span_of = |var: &str| realized.spans.iter().find(|(k, _)| k == var).expect("realized").1;
    events
        .iter()
        .enumerate()
        .map(|(i, (ty, roles))| {
            let trigger = span_of(&format!("t{}", i));
            EventRecord {
                event_type: ty.clone(),
                trigger,
                trigger_text: realized.tokens[trigger.start..trigger.end].join(" "),
                arguments: roles
                    .iter()
                    .map(|(role, var)| {
                        let s = span_of(var);
                        Argument {
                            role: role.clone(),
                            span: Some(s),
                            text: realized.tokens[s.start..s.end].join(" "),
                        }
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Sentence for a type without a handwritten pattern: the trigger is the
/// lower-cased surface name and up to two template roles are filled.
fn generic_sentence(def: &EventTypeDef, rng: &mut ChaCha8Rng) -> (String, Vec<(String, String)>, EventBindings) {
    let mut roles: Vec<&str> = Vec::new();
    for r in def.slot_order() {
        if roles.len() < 2 && !roles.contains(&r) {
            roles.push(r);
        }
    }
    let mut bindings = Vec::new();
    let mut text = String::from("According to reports ,");
    for (i, role) in roles.iter().enumerate() {
        let var = format!("{}{}", pool_for_role(role), i + 1);
        text.push_str(&format!(" {{{}}}", var));
        if i == 0 {
            text.push_str(" {t0}");
        }
        bindings.push((role.to_string(), var));
    }
    if roles.is_empty() {
        text.push_str(" a {t0} happened");
    }
    text.push_str(" on {d9} .");
    let mut values = bind_entities(&text, rng);
    values.push(("t0".into(), def.surface_name.to_lowercase()));
    (text, values, vec![(def.type_id.clone(), bindings)])
}

fn relevant_sentence(
    ontology: &EventOntology,
    patterns: &[&'static Pattern],
    multi: &[&'static Pattern],
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, Vec<EventRecord>) {
    let use_multi = !multi.is_empty() && rng.random_bool(MULTI_EVENT_RATE);
    let def = ontology.types.choose(rng).expect("nonempty ontology");
    let own: Vec<&Pattern> = patterns
        .iter()
        .filter(|p| p.events[0].event_type == def.type_id)
        .copied()
        .collect();
    let (text, values, events) = if use_multi || !own.is_empty() {
        let p = if use_multi { multi } else { &own[..] }.choose(rng).unwrap();
        let mut values = bind_entities(p.text, rng);
        for (i, e) in p.events.iter().enumerate() {
            values.push((format!("t{}", i), e.triggers.choose(rng).unwrap().to_string()));
        }
        let events = p
            .events
            .iter()
            .map(|e| {
                let roles = e.roles.iter().map(|(r, v)| (r.to_string(), v.to_string())).collect();
                (e.event_type.to_string(), roles)
            })
            .collect();
        (p.text.to_string(), values, events)
    } else {
        generic_sentence(def, rng)
    };
    let realized = realize(&text, &values);
    (realized.tokens.clone(), make_records(&realized, &events))
}

fn irrelevant_sentence(rng: &mut ChaCha8Rng) -> Vec<String> {
    let text = *IRRELEVANT_PATTERNS.choose(rng).unwrap();
    realize(text, &bind_entities(text, rng)).tokens
}

/// `round(irrelevant_rate * n_sents)` sentences carry no events; the rest
/// realize one or two records of types from `ontology`.
pub fn generate_synthetic(
    ontology: &EventOntology,
    n_sents: usize,
    irrelevant_rate: f64,
    seed: u64,
) -> Vec<SentenceInstance> {
    assert!((0.0..=1.0).contains(&irrelevant_rate), "irrelevant_rate must lie in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_irrelevant = (irrelevant_rate * n_sents as f64).round() as usize;
    let mut relevant_flags: Vec<bool> = (0..n_sents).map(|i| i >= n_irrelevant).collect();
    relevant_flags.shuffle(&mut rng);

    let known = |p: &&Pattern| p.events.iter().all(|e| ontology.get(e.event_type).is_some());
    let single: Vec<&Pattern> = PATTERNS.iter().filter(|p| p.events.len() == 1).filter(known).collect();
    let multi: Vec<&Pattern> = PATTERNS.iter().filter(|p| p.events.len() > 1).filter(known).collect();

    let mut out = Vec::with_capacity(n_sents);
    for (i, relevant) in relevant_flags.into_iter().enumerate() {
        let (tokens, events) = if relevant {
            let mut attempt = 0;
            loop {
                let (tokens, events) = relevant_sentence(ontology, &single, &multi, &mut rng);
                let candidate = SentenceInstance {
                    doc_id: String::new(),
                    sent_id: String::new(),
                    tokens,
                    events,
                };
                if passes_self_check(&candidate, ontology) {
                    break (candidate.tokens, candidate.events);
                }
                attempt += 1;
                assert!(attempt < MAX_ATTEMPTS, "generator could not satisfy its self-check");
            }
        } else {
            (irrelevant_sentence(&mut rng), Vec::new())
        };
        out.push(SentenceInstance {
            doc_id: format!("syn{:05}", i / 10),
            sent_id: format!("{}", i),
            tokens,
            events,
        });
    }
    out
}
