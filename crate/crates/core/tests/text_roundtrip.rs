mod common;

use common::{canonical, checks, round_trip_failures};
use eventgen::corpus::generate_synthetic;
use eventgen::ontology::EventOntology;
use eventgen::outparse::{align_template, extract_records, nearest_occurrence, parse_output, resolve_trigger_offsets, ParsedChunk};
use eventgen::promptgen::{build_prompt, serialize_ground_truth};
use eventgen::record::{Argument, EventRecord, Span};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn synthetic_gold_survives_serialize_then_parse() {
    if let Err(e) = checks::round_trip(1000, 11) {
        panic!("{e}");
    }

    let ace = EventOntology::ace();
    let data = generate_synthetic(&ace, 300, 0.2, 12);
    assert!(round_trip_failures(&data, &ace).is_empty());
}

#[test]
fn figure_one_sentence_is_producible() {
    let toy = EventOntology::toy();
    let data = generate_synthetic(&toy, 2000, 0.0, 1);
    let found = data.iter().any(|s| {
        let mut types: Vec<&str> = s.events.iter().map(|e| e.event_type.as_str()).collect();
        types.sort();
        types == ["Justice:Arrest-Jail", "Movement:Transport"]
    });
    assert!(found);
}

#[test]
fn arguments_containing_and_do_not_round_trip() {
    let toy = EventOntology::toy();
    let def = toy.get("Contact:Meet").unwrap();
    let ctx: Vec<String> = "Smith and Sons met Ann in Oslo".split(' ').map(String::from).collect();
    let rec = EventRecord {
        event_type: def.type_id.clone(),
        trigger: Span::new(3, 4),
        trigger_text: "met".into(),
        arguments: vec![
            Argument { role: "Entity".into(), span: Some(Span::new(0, 3)), text: "Smith and Sons".into() },
            Argument { role: "Entity".into(), span: Some(Span::new(4, 5)), text: "Ann".into() },
        ],
    };
    let text = serialize_ground_truth(&[rec.clone()], def, &ctx).unwrap();
    let back = extract_records(&text, def, &ctx);
    assert_ne!(canonical(&back), canonical(&[rec]));
    let chunk = &parse_output(&text, def)[0];
    assert_eq!(chunk.arg_texts[0], ["Smith", "Sons"]);
}

#[test]
fn serialization_ignores_input_order_and_sorts_by_trigger() {
    let toy = EventOntology::toy();
    let def = toy.get("Contact:Meet").unwrap();
    let ctx: Vec<String> = "Ann met Bo ; Cy met Di ; Ed met Flo".split(' ').map(String::from).collect();
    let mk = |t: usize| EventRecord {
        event_type: def.type_id.clone(),
        trigger: Span::new(t, t + 1),
        trigger_text: "met".into(),
        arguments: vec![Argument { role: "Entity".into(), span: Some(Span::new(t - 1, t)), text: ctx[t - 1].clone() }],
    };
    let mut records = vec![mk(1), mk(5), mk(9)];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let reference = serialize_ground_truth(&records, def, &ctx).unwrap();
    for _ in 0..20 {
        records.shuffle(&mut rng);
        assert_eq!(serialize_ground_truth(&records, def, &ctx).unwrap(), reference);
    }
    // oracle: chunks appear in increasing order of trigger start
    let starts: Vec<usize> = reference
        .split(" <OUT_SEP> ")
        .map(|c| ctx.iter().position(|w| c.contains(&format!("<IN_SEP> {} ", w))).unwrap())
        .collect();
    assert_eq!(starts, [0, 4, 8]);
    assert_eq!(reference.matches(" <OUT_SEP> ").count(), 2);
    // both "met" triggers resolve one by one to distinct occurrences
    let back = extract_records(&reference, def, &ctx);
    assert_eq!(canonical(&back), canonical(&records));
}

#[test]
fn prompt_placeholder_counts() {
    for o in [EventOntology::ace(), EventOntology::ere()] {
        for def in &o.types {
            let p = build_prompt(def);
            assert_eq!(p.full_text.matches("<arg>").count(), def.num_slots());
            assert_eq!(p.full_text.matches("<trg>").count(), 1);
        }
    }
}

/// Exhaustive alignment: try every combination of anchor positions and keep
/// the lexicographically smallest valid one.
fn align_oracle(args: &str, template: &str) -> Option<Vec<String>> {
    let segs: Vec<&str> = template.split("<arg>").collect();
    if segs.len() == 1 {
        return (args == segs[0]).then(Vec::new);
    }
    let n = segs.len();
    if !args.starts_with(segs[0]) || !args.ends_with(segs[n - 1]) {
        return None;
    }
    let lo = segs[0].len();
    let hi = args.len().checked_sub(segs[n - 1].len())?;
    if hi < lo {
        return None;
    }
    fn search(args: &str, segs: &[&str], i: usize, pos: usize, hi: usize, acc: &mut Vec<usize>) -> bool {
        if i == segs.len() - 1 {
            return true;
        }
        for p in pos..=hi {
            if p + segs[i].len() <= hi && args[p..].starts_with(segs[i]) {
                acc.push(p);
                if search(args, segs, i + 1, p + segs[i].len(), hi, acc) {
                    return true;
                }
                acc.pop();
            }
        }
        false
    }
    let mut starts = Vec::new();
    if !search(args, &segs, 1, lo, hi, &mut starts) {
        return None;
    }
    let mut caps = Vec::new();
    let mut pos = lo;
    for (k, &s) in starts.iter().enumerate() {
        caps.push(args[pos..s].to_string());
        pos = s + segs[k + 1].len();
    }
    caps.push(args[pos..hi].to_string());
    Some(caps)
}

fn occurrence_oracle(needle: &[&str], ctx: &[&str]) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..ctx.len() {
        if i + needle.len() <= ctx.len() && (0..needle.len()).all(|j| ctx[i + j] == needle[j]) {
            out.push(i);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2000, ..ProptestConfig::default() })]

    #[test]
    fn alignment_matches_exhaustive_oracle(
        args in "[ab <>]{0,10}",
        pieces in prop::collection::vec("[ab ]{0,3}", 1..4),
    ) {
        let template = pieces.join("<arg>");
        prop_assert_eq!(align_template(&args, &template), align_oracle(&args, &template));
    }

    #[test]
    fn templates_align_with_filled_slots(
        fills in prop::collection::vec("[xyz]{1,4}( [xyz]{1,3})?", 3),
    ) {
        let t = "<arg> met with <arg> in <arg> place";
        let args = format!("{} met with {} in {} place", fills[0], fills[1], fills[2]);
        prop_assert_eq!(align_template(&args, t), align_oracle(&args, t));
        prop_assert_eq!(align_template(&args, t).unwrap(), fills);
    }

    #[test]
    fn chunk_count_is_bounded_by_separators(
        parts in prop::collection::vec(prop::sample::select(vec![
            "Trigger", "<trg>", "<IN_SEP>", "<OUT_SEP>", "met", "with", "in", "place", "<arg>", "Ann", "and",
        ]), 0..30),
    ) {
        let text = parts.join(" ");
        let def = EventOntology::toy().get("Contact:Meet").unwrap().clone();
        let chunks = parse_output(&text, &def);
        prop_assert!(chunks.len() <= text.matches(" <OUT_SEP> ").count() + 1);
        for c in &chunks {
            prop_assert!(c.valid || c.arg_texts.is_empty());
        }
    }

    #[test]
    fn trigger_resolution_matches_occurrence_enumeration(
        ctx in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 0..12),
        triggers in prop::collection::vec(prop::sample::select(vec!["a", "b", "a b", "d"]), 0..6),
    ) {
        let context: Vec<String> = ctx.iter().map(|s| s.to_string()).collect();
        let chunks: Vec<ParsedChunk> = triggers
            .iter()
            .map(|t| ParsedChunk { trigger_text: t.to_string(), arg_texts: vec![], valid: false })
            .collect();
        let got = resolve_trigger_offsets(&chunks, &context);
        for (i, t) in triggers.iter().enumerate() {
            let words: Vec<&str> = t.split(' ').collect();
            let occ = occurrence_oracle(&words, &ctx);
            let k = triggers[..i].iter().filter(|u| *u == t).count();
            let want = if occ.is_empty() { None } else { Some(occ[k.min(occ.len() - 1)]) };
            prop_assert_eq!(got[i].map(|s| s.start), want);
            if let Some(s) = got[i] {
                prop_assert_eq!(s.len(), words.len());
            }
        }
    }

    #[test]
    fn argument_resolution_minimizes_distance(
        ctx in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 1..15),
        needle in prop::sample::select(vec!["a", "b", "a b", "c c"]),
        trig in 0usize..15,
    ) {
        let context: Vec<String> = ctx.iter().map(|s| s.to_string()).collect();
        let trig = trig.min(ctx.len() - 1);
        let words: Vec<&str> = needle.split(' ').collect();
        let occ = occurrence_oracle(&words, &ctx);
        let mut best: Option<usize> = None;
        for &o in &occ {
            let d = (o as i64 - trig as i64).abs();
            if best.is_none_or(|b| d < (b as i64 - trig as i64).abs()) {
                best = Some(o);
            }
        }
        let got = nearest_occurrence(needle, Span::new(trig, trig + 1), &context);
        prop_assert_eq!(got.map(|s| s.start), best);
    }
}
