mod common;

use common::{checks, random_ids, random_model};
use eventgen::numeric::{ParamStore, Session, Tensor};
use eventgen::seq2seq::{beam_search, ActivationHistory, Decoder, Seq2Seq, EOS_ID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_history(model: &Seq2Seq, len: usize, rng: &mut ChaCha8Rng) -> ActivationHistory {
    let w = model.config.prefix_width();
    let mut t = || Tensor::new(vec![len, w], (0..len * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let (e, d) = (t(), t());
    ActivationHistory::from_rows(&e, &d, &model.config)
}

#[test]
fn cached_steps_match_full_sequence_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..20 {
        let (mut model, params) = random_model(13, 16, 2, 4, trial);
        model.config.prefix_cross_attention = trial % 2 == 1;
        let x = random_ids(&mut rng, 13, 1..9);
        let y: Vec<usize> = random_ids(&mut rng, 13, 0..7)
            .into_iter()
            .map(|t| if t == EOS_ID { 4 } else { t })
            .collect();
        let prefix = (trial % 3 != 0).then(|| random_history(&model, 1 + trial as usize % 4, &mut rng));
        let dec = Decoder::new(&model, &params, &x, prefix.as_ref()).unwrap();
        let mut st = dec.start();
        let mut total = 0.0;
        let mut feed = vec![1];
        feed.extend(&y);
        let mut targets = y.clone();
        targets.push(EOS_ID);
        for (&inp, &tgt) in feed.iter().zip(&targets) {
            let lp = dec.step(&mut st, inp);
            let mass: f64 = lp.iter().map(|l| l.exp()).sum();
            assert!((mass - 1.0).abs() < 1e-9);
            total += lp[tgt];
        }
        let direct = model.sequence_logprob(&params, &x, &y, prefix.as_ref()).unwrap();
        assert!((total - direct).abs() < 1e-9, "trial {}: {} vs {}", trial, total, direct);

        let lp = dec.next_token_logprobs(&feed);
        let direct_last = {
            let mut s = dec.start();
            let mut out = vec![];
            for &t in &feed {
                out = dec.step(&mut s, t);
            }
            out
        };
        assert_eq!(lp, direct_last);
    }
}

#[test]
fn zeroed_head_gives_uniform_distribution() {
    let (model, mut params) = random_model(9, 8, 1, 2, 3);
    params.get_mut("phi/head/w").unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
    let dec = Decoder::new(&model, &params, &[4, 5, 6], None).unwrap();
    let lp = dec.next_token_logprobs(&[1, 7]);
    for l in lp {
        assert!((l + (9f64).ln()).abs() < 1e-12);
    }
}

fn encode_values(model: &Seq2Seq, params: &ParamStore, x: &[usize], prefix: Option<&ActivationHistory>) -> Tensor {
    let mut s = Session::frozen(params);
    let pv = prefix.map(|p| p.to_vars(&mut s.graph));
    let e = model.encode(&mut s, x, pv.as_ref()).unwrap();
    s.graph.value(e).clone()
}

#[test]
fn prefix_changes_values_but_not_shapes() {
    let (model, params) = random_model(11, 16, 2, 4, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_ids(&mut rng, 11, 6..7);
    let plain = encode_values(&model, &params, &x, None);
    let empty = random_history(&model, 0, &mut rng);
    let zero_len = encode_values(&model, &params, &x, Some(&empty));
    assert_eq!(plain.data(), zero_len.data());
    let h = random_history(&model, 3, &mut rng);
    let with = encode_values(&model, &params, &x, Some(&h));
    assert_eq!(with.shape(), plain.shape());
    assert!(with.max_abs_diff(&plain) > 1e-6);
    assert_eq!(encode_values(&model, &params, &x, Some(&h)).data(), with.data());
}

#[test]
fn decoding_matches_greedy_and_exhaustive_oracles() {
    if let Err(e) = checks::decode_equivalence() {
        panic!("{e}");
    }
}

#[test]
fn exhaustive_beam_matches_brute_force_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..40 {
        let vocab = 3 + trial as usize % 3;
        let (model, params) = random_model(vocab, 8, 2, 2, 200 + trial);
        let x = random_ids(&mut rng, vocab, 1..6);
        let dec = Decoder::new(&model, &params, &x, None).unwrap();
        for max_steps in 1..=4 {
            let all = checks::enumerate_sequences(&dec, max_steps);
            let best = all
                .iter()
                .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                .unwrap();
            let beam = beam_search(&dec, vocab.pow(max_steps as u32), max_steps);
            assert!(beam.finished);
            assert_eq!(beam.tokens, best.0, "trial {} steps {}", trial, max_steps);
            assert_eq!(beam.score, best.1);
            let direct = model.sequence_logprob(&params, &x, &best.0, None).unwrap();
            assert!((direct - best.1).abs() < 1e-9);

            let narrow = beam_search(&dec, 1, max_steps);
            let wide = beam_search(&dec, 6, max_steps);
            if narrow.finished && wide.finished {
                assert!(wide.score >= narrow.score, "trial {} steps {}", trial, max_steps);
            }
        }
    }
}
