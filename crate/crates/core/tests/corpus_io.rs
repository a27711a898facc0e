use eventgen::corpus::{generate_synthetic, read_jsonl, stats_table, write_jsonl};
use eventgen::ontology::EventOntology;
use eventgen::record::{Argument, EventRecord, SentenceInstance, Span};
use eventgen::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng, i: usize) -> SentenceInstance {
    let words = ["a", "b", "Los", "Ängeles", "\"q\"", "x\\y", "."];
    let n = rng.random_range(1..12);
    let tokens: Vec<String> = (0..n).map(|_| words[rng.random_range(0..words.len())].to_string()).collect();
    let events = (0..rng.random_range(0..3))
        .map(|_| {
            let s = rng.random_range(0..n);
            let e = rng.random_range(s + 1..=n);
            EventRecord {
                event_type: "Life:Be-Born".into(),
                trigger: Span::new(s, e),
                trigger_text: tokens[s..e].join(" "),
                arguments: (0..rng.random_range(0..3))
                    .map(|_| {
                        let s = rng.random_range(0..n);
                        let span = (!rng.random_bool(0.2)).then(|| Span::new(s, s + 1));
                        Argument {
                            role: "Place".into(),
                            span,
                            text: span.map_or("elsewhere".to_string(), |sp| tokens[sp.start].clone()),
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    SentenceInstance {
        doc_id: format!("doc{}", i / 7),
        sent_id: i.to_string(),
        tokens,
        events,
    }
}

#[test]
fn write_then_read_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<SentenceInstance> = (0..1000).map(|i| random_instance(&mut rng, i)).collect();
    write_jsonl(&path, &data).unwrap();
    assert_eq!(read_jsonl(&path).unwrap(), data);
}

#[test]
fn empty_file_reads_as_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    assert!(read_jsonl(&path).unwrap().is_empty());
}

#[test]
fn errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let good = r#"{"doc_id":"d","sent_id":"0","tokens":["a","b"],"events":[]}"#;
    let backwards = r#"{"doc_id":"d","sent_id":"1","tokens":["a","b"],"events":[{"type":"X","trigger":{"start":1,"end":1,"text":""},"args":[]}]}"#;
    std::fs::write(&path, format!("{}\n{}\n", good, backwards)).unwrap();
    match read_jsonl(&path) {
        Err(Error::Data { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a data error, got {:?}", other),
    }
    std::fs::write(&path, format!("{}\n{{not json\n", good)).unwrap();
    assert!(matches!(read_jsonl(&path), Err(Error::Data { line: 2, .. })));
}

#[test]
fn generation_is_seed_deterministic() {
    let toy = EventOntology::toy();
    let a = generate_synthetic(&toy, 300, 0.8, 42);
    let b = generate_synthetic(&toy, 300, 0.8, 42);
    let c = generate_synthetic(&toy, 300, 0.8, 43);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let table = stats_table("toy5", &[("Train", &a), ("Test", &c)]);
    assert!(table.contains("#Sents") && table.contains("#Roles"));
    assert_eq!(table.lines().count(), 3);
}
