use super::*;
use crate::corpus::{generate_corpus, CorpusConfig, Dataset};
use crate::udrl::{augment_dataset, QuantScheme, QuantizerConfig};

fn tiny_vocab(words: &[&str]) -> Vocabulary {
    let caps: Vec<Vec<String>> = vec![words.iter().map(|s| s.to_string()).collect()];
    build_vocab_from(caps.iter().map(Vec::as_slice), &default_specials(), 1024).unwrap()
}

fn small_hyper() -> CaptionerHyper {
    CaptionerHyper {
        embed_dim: 8,
        hidden: 12,
        max_len: 12,
        seed: 5,
        features: FigureFeatureConfig {
            text_buckets: 4,
            label_buckets: 4,
            hash_seed: 1,
        },
    }
}

fn feats(model: &CaptionerModel<f64>, k: f64) -> Vec<f64> {
    (0..model.hyper.features.dim()).map(|i| ((i as f64 + k) * 0.37).sin()).collect()
}

fn target(model: &CaptionerModel<f64>, words: &[&str]) -> Vec<usize> {
    let mut t = vec![model.vocab.bos()];
    t.extend(words.iter().map(|w| model.vocab.id(w).unwrap()));
    t.push(model.vocab.eos());
    t
}

#[test]
fn uniform_output_gives_log_vocab_loss() {
    let words: Vec<String> = (0..39).map(|i| format!("w{i}")).collect();
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let vocab = tiny_vocab(&refs);
    assert_eq!(vocab.len(), 50);
    let mut m: CaptionerModel<f64> = CaptionerModel::new(vocab, small_hyper()).unwrap();
    m.params.tensors[network::W_OUT].data.iter_mut().for_each(|v| *v = 0.0);
    let f = feats(&m, 0.0);
    let t = target(&m, &["w1", "w2", "w3"]);
    let (loss, _) = m.lm_loss(&f, &t, None).unwrap();
    assert!((loss - 50f64.ln()).abs() < 1e-12);
}

#[test]
fn padding_after_eos_is_ignored() {
    let m: CaptionerModel<f64> = CaptionerModel::new(tiny_vocab(&["a", "b"]), small_hyper()).unwrap();
    let f = feats(&m, 1.0);
    let t = target(&m, &["a", "b"]);
    let mut padded = t.clone();
    padded.extend([m.vocab.pad(); 3]);
    assert_eq!(m.lm_loss(&f, &t, None).unwrap().0, m.lm_loss(&f, &padded, None).unwrap().0);
}

#[test]
fn conditioning_placement_shapes_targets() {
    let m: CaptionerModel<f64> = CaptionerModel::new(tiny_vocab(&["a", "b"]), small_hyper()).unwrap();
    let good = m.vocab.id("<|good|>").unwrap();
    let ids = [m.vocab.id("a").unwrap(), m.vocab.id("b").unwrap()];
    let pre = m.sequence(&ids, Some((good, Placement::Prepend)));
    assert_eq!(pre.inputs, vec![m.vocab.bos(), good, ids[0], ids[1]]);
    assert_eq!(pre.targets, vec![None, Some(ids[0]), Some(ids[1]), Some(m.vocab.eos())]);
    let app = m.sequence(&ids, Some((good, Placement::Append)));
    assert_eq!(app.inputs, vec![m.vocab.bos(), ids[0], ids[1], good]);
    assert_eq!(app.targets, vec![Some(ids[0]), Some(ids[1]), Some(good), Some(m.vocab.eos())]);
}

#[test]
fn invalid_targets_are_rejected() {
    let m: CaptionerModel<f64> = CaptionerModel::new(tiny_vocab(&["a"]), small_hyper()).unwrap();
    let f = feats(&m, 0.0);
    assert!(matches!(m.lm_loss(&f, &[m.vocab.bos(), 999, m.vocab.eos()], None), Err(Error::Vocab(_))));
    assert!(m.lm_loss(&f, &[m.vocab.id("a").unwrap(), m.vocab.eos()], None).is_err());
    let long: Vec<usize> = std::iter::once(m.vocab.bos())
        .chain(std::iter::repeat_n(m.vocab.id("a").unwrap(), 20))
        .chain(std::iter::once(m.vocab.eos()))
        .collect();
    assert!(m.lm_loss(&f, &long, None).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let m: CaptionerModel<f64> = CaptionerModel::new(tiny_vocab(&["a", "b", "c"]), small_hyper()).unwrap();
    let f = feats(&m, 2.0);
    let t = target(&m, &["a", "b"]);
    for cond in [
        None,
        Some((ControlToken::Good, Placement::Prepend)),
        Some((ControlToken::Bad5, Placement::Append)),
    ] {
        let r = m.gradient_check(&f, &t, cond, 1e-4, 40, 9).unwrap();
        assert!(r.probes >= MIN_GRADCHECK_PROBES, "{r:?}");
        assert!(r.max_relative_error <= 1e-3, "{cond:?} {r:?}");
    }
    assert!(m.gradient_check(&f, &t, None, 1e-2, 20, 0).is_err());
}

#[test]
fn gradient_check_is_order_free() {
    let m: CaptionerModel<f64> = CaptionerModel::new(tiny_vocab(&["a", "b"]), small_hyper()).unwrap();
    let f = feats(&m, 3.0);
    let t = target(&m, &["b", "a"]);
    let a = m.gradient_check(&f, &t, None, 1e-5, 30, 1).unwrap();
    let b = m.gradient_check(&f, &t, None, 1e-5, 30, 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn distributions_are_normalized() {
    let m: CaptionerModel<f64> = CaptionerModel::new(tiny_vocab(&["a", "b"]), small_hyper()).unwrap();
    let f = feats(&m, 0.5);
    for prefix in [vec![m.vocab.bos()], target(&m, &["a", "b"])] {
        let p = m.next_token_distribution(&f, &prefix).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

fn one_example_dataset() -> Dataset {
    let cfg = CorpusConfig {
        n_pairs: 50,
        split_ratios: [0.8, 0.1, 0.1],
        control_size: 4,
        lexicon_size: 36,
    };
    let mut ds = generate_corpus(&cfg, 1).unwrap();
    ds.train.truncate(1);
    ds.val = ds.train.clone();
    ds.control_set.clear();
    ds
}

#[test]
fn memorizes_a_single_example() {
    let ds = one_example_dataset();
    let vocab = build_vocab(&ds, &default_specials()).unwrap();
    let mut m: CaptionerModel<f64> = CaptionerModel::new(
        vocab,
        CaptionerHyper {
            embed_dim: 16,
            hidden: 32,
            ..CaptionerHyper::default()
        },
    )
    .unwrap();
    let schedule = TrainingSchedule {
        phases: vec![Phase {
            objective: Objective::Lm,
            quantizer: None,
            epochs: 500,
        }],
        batch_size: 1,
        lr: 1e-2,
        ..TrainingSchedule::default()
    };
    let hist = train(&mut m, std::slice::from_ref(&ds), &schedule).unwrap();
    let last = hist.last().unwrap().train_loss.unwrap();
    assert!(last <= 0.05, "final loss {last}");
    assert_eq!(hist[0].epoch, 0);
    let cfg = DecodeConfig {
        condition: Condition::None,
        ..DecodeConfig::default()
    };
    let out = generate(&m, &encode_record(&ds.train[0], &m.hyper.features), &cfg).unwrap();
    assert_eq!(out, ds.train[0].caption_tokens);
}

#[test]
fn nucleus_is_seeded_and_forced_tokens_checked() {
    let ds = one_example_dataset();
    let m: CaptionerModel<f64> =
        CaptionerModel::new(build_vocab(&ds, &default_specials()).unwrap(), small_hyper()).unwrap();
    let f = encode_record(&ds.train[0], &m.hyper.features);
    let cfg = DecodeConfig {
        strategy: DecodeStrategy::Nucleus,
        top_p: 1.0,
        condition: Condition::ForceGood,
        max_len: None,
        seed: 42,
    };
    let a = generate(&m, &f, &cfg).unwrap();
    assert_eq!(a, generate(&m, &f, &cfg).unwrap());
    assert!(a.len() <= m.hyper.max_len - 2);
    assert!(a.iter().all(|t| !t.starts_with("<|") && t != BOS && t != PAD && t != UNK));
    let bad = DecodeConfig {
        condition: Condition::ForceToken("<|great|>".into()),
        ..cfg
    };
    assert!(matches!(generate(&m, &f, &bad), Err(Error::Vocab(_))));
}

fn augmented(ds: &Dataset, scheme: QuantScheme) -> Dataset {
    let mut scored = ds.clone();
    for split in [&mut scored.train, &mut scored.val, &mut scored.test] {
        for (i, r) in split.iter_mut().enumerate() {
            r.set_score(crate::feedback::FeedbackMetric::Helpfulness, 1.0 + (i % 7) as f64 * 0.5);
        }
    }
    scored.control_set.clear();
    let q = QuantizerConfig {
        scheme,
        ..QuantizerConfig::default()
    };
    augment_dataset(&scored, &q).unwrap().0
}

fn small_corpus() -> Dataset {
    generate_corpus(
        &CorpusConfig {
            n_pairs: 60,
            split_ratios: [0.8, 0.1, 0.1],
            control_size: 4,
            lexicon_size: 36,
        },
        3,
    )
    .unwrap()
}

#[test]
fn mixed_curriculum_runs_and_scheme_mismatch_is_reported() {
    let ds = small_corpus();
    let binary = augmented(&ds, QuantScheme::Binary);
    let five = augmented(&ds, QuantScheme::FiveLevel);
    let vocab = build_vocab(&ds, &default_specials()).unwrap();
    for t in ControlToken::ALL {
        assert!(vocab.id(t.text()).is_some());
    }
    let phase = |scheme, epochs| Phase {
        objective: Objective::Hf,
        quantizer: Some(QuantizerConfig {
            scheme,
            ..QuantizerConfig::default()
        }),
        epochs,
    };
    let schedule = TrainingSchedule {
        phases: vec![phase(QuantScheme::Binary, 5), phase(QuantScheme::FiveLevel, 5)],
        ..TrainingSchedule::default()
    };
    let mut m: CaptionerModel<f64> = CaptionerModel::new(vocab.clone(), small_hyper()).unwrap();
    let hist = train(&mut m, &[ds.clone(), binary.clone(), five.clone()], &schedule).unwrap();
    assert_eq!(hist.len(), 12);
    assert_eq!(m.desired_token, "<|vgood5|>");

    let mut fresh: CaptionerModel<f64> = CaptionerModel::new(vocab, small_hyper()).unwrap();
    let err = train(&mut fresh, &[ds, binary], &schedule).unwrap_err();
    assert!(err.to_string().contains("scheme mismatch"), "{err}");
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let ds = small_corpus();
    let vocab = build_vocab(&ds, &default_specials()).unwrap();
    let schedule = TrainingSchedule {
        phases: vec![Phase {
            objective: Objective::Lm,
            quantizer: None,
            epochs: 2,
        }],
        ..TrainingSchedule::default()
    };
    let run = || {
        let mut m: CaptionerModel<f64> = CaptionerModel::new(vocab.clone(), small_hyper()).unwrap();
        train(&mut m, std::slice::from_ref(&ds), &schedule).unwrap();
        m
    };
    let (a, b) = (run(), run());
    assert_eq!(a.params.to_f64_bytes(), b.params.to_f64_bytes());
    let back = CaptionerModel::<f64>::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
    assert!(CaptionerModel::<f32>::from_json(&a.to_json().unwrap()).is_err());
}

#[test]
fn corpus_loss_is_length_weighted() {
    let ds = small_corpus();
    let m: CaptionerModel<f64> =
        CaptionerModel::new(build_vocab(&ds, &default_specials()).unwrap(), small_hyper()).unwrap();
    let ex = encode_split(&m, &ds.train[..5], Objective::Lm, None).unwrap();
    let total: f64 = ex.iter().map(|(f, s)| m.loss_with(&m.params, f, s)).sum();
    let n: usize = ex.iter().map(|(_, s)| s.num_targets()).sum();
    let per_seq: f64 = ex
        .iter()
        .map(|(f, s)| m.loss_with(&m.params, f, s) / s.num_targets() as f64 * s.num_targets() as f64)
        .sum();
    assert!((corpus_loss(&m, &ex) - total / n as f64).abs() < 1e-12);
    assert!((per_seq / n as f64 - corpus_loss(&m, &ex)).abs() < 1e-12);
}
