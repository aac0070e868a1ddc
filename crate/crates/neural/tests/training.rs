use std::path::PathBuf;
use std::sync::OnceLock;

use discoseq::decoder::{decode, DecodeOptions};
use discoseq::oracle::encode;
use discoseq::transition::{Configuration, Disco, Scheme};
use discoseq::treebank::{load_treebank, Format, Treebank};
use discoseq_neural::checkpoint::{load, read_checkpoint, save, write_checkpoint, CheckpointError};
use discoseq_neural::model::{Model, ModelConfig};
use discoseq_neural::train::{exact_match_on, train, TrainError, TrainOptions};

fn toy() -> Treebank {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy20.disc");
    load_treebank(path, Format::Discbracket).unwrap()
}

fn scheme() -> Scheme {
    Scheme::in_order().with_disco(Disco::Swap)
}

fn overfit() -> &'static Model {
    static MODEL: OnceLock<Model> = OnceLock::new();
    MODEL.get_or_init(|| {
        let opts = TrainOptions {
            eval_every: 10,
            stop_at_exact_match: true,
            ..TrainOptions::default()
        };
        let (model, history) = train(&toy(), scheme(), ModelConfig::toy(), opts).unwrap();
        assert_eq!(history.last().unwrap().train_exact_match, Some(1.0));
        model
    })
}

#[test]
fn training_is_deterministic() {
    let tb = Treebank::new(toy().trees[..6].to_vec(), "head");
    let cfg = ModelConfig {
        epochs: 3,
        d_model: 16,
        dropout: 0.1,
        ..ModelConfig::toy()
    };
    let run = |threads| {
        let opts = TrainOptions {
            threads,
            ..TrainOptions::default()
        };
        train(&tb, scheme(), cfg.clone(), opts).unwrap()
    };
    let (m1, h1) = run(None);
    let (m2, h2) = run(Some(1));
    let bits = |h: &[discoseq_neural::EpochStats]| h.iter().map(|s| s.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&h1), bits(&h2));
    assert_eq!(m1.params, m2.params);
    let (_, h3) = train(&tb, scheme(), ModelConfig { seed: 2, ..cfg.clone() }, TrainOptions::default()).unwrap();
    assert_ne!(bits(&h1), bits(&h3));
}

#[test]
fn training_rejects_bad_input() {
    assert!(matches!(
        train(&Treebank::new(vec![], "empty"), scheme(), ModelConfig::toy(), TrainOptions::default()),
        Err(TrainError::Empty)
    ));
    assert!(matches!(
        train(&toy(), Scheme::in_order(), ModelConfig::toy(), TrainOptions::default()),
        Err(TrainError::Encode { index: 0, .. })
    ));
}

#[test]
fn overfit_model_reproduces_training_set() {
    let model = overfit();
    assert_eq!(exact_match_on(model, &toy(), 1).unwrap(), 1.0);
}

#[test]
fn greedy_output_is_the_oracle_sequence() {
    let model = overfit();
    for tree in toy().iter() {
        let pred = model.predict(tree.words(), 1).unwrap();
        assert!(pred.complete);
        assert_eq!(pred.tokens, encode(tree, scheme()).unwrap().tokens);
    }
}

#[test]
fn beam_outputs_are_legal_and_no_worse() {
    let model = overfit();
    for tree in toy().iter() {
        let greedy = model.predict(tree.words(), 1).unwrap();
        for beam in [2, 10] {
            let pred = model.predict(tree.words(), beam).unwrap();
            let mut c = Configuration::initial(tree.len()).unwrap();
            for t in &pred.tokens {
                c = c.apply(t, scheme()).unwrap();
            }
            assert!(c.is_terminal(scheme()));
            assert!(pred.score >= greedy.score - 1e-12, "beam {beam}");
            let score = model.sequence_score(tree.words(), &pred.tokens).unwrap();
            assert!((score - pred.score).abs() < 1e-9);
            let out = decode(tree.words(), &pred.tokens, scheme(), &DecodeOptions::default()).unwrap();
            assert!(out.repairs.is_empty());
        }
    }
}

#[test]
fn length_cap_stops_search() {
    let model = overfit();
    let tree = &toy().trees[0];
    let pred = model.predict_capped(tree.words(), 3, 4).unwrap();
    assert_eq!(pred.tokens.len(), 4);
    assert!(!pred.complete);
    let out = decode(tree.words(), &pred.tokens, scheme(), &DecodeOptions::default()).unwrap();
    assert!(!out.repairs.is_empty());
    assert!(out.tree.validate().is_ok());
}

#[test]
fn unknown_words_still_decode() {
    let model = overfit();
    let words: Vec<String> = ["zzz", "yyy", "xxx"].iter().map(|s| s.to_string()).collect();
    let pred = model.predict(&words, 4).unwrap();
    let out = decode(&words, &pred.tokens, scheme(), &DecodeOptions::default()).unwrap();
    assert!(out.tree.validate().is_ok());
}

#[test]
fn checkpoint_roundtrip() {
    let model = overfit();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.ckpt");
    save(model, &path).unwrap();
    let loaded = load(&path).unwrap();
    assert_eq!(loaded.params, model.params);
    assert_eq!(loaded.vocab, model.vocab);
    assert_eq!(loaded.config, model.config);
    assert_eq!(loaded.scheme, model.scheme);
    let words = toy().trees[3].words().to_vec();
    assert_eq!(loaded.predict(&words, 3).unwrap(), model.predict(&words, 3).unwrap());

    let mut bytes = Vec::new();
    write_checkpoint(model, &mut bytes).unwrap();
    assert_eq!(&bytes[..8], b"DSQCKPT\0");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_checkpoint(&bad[..]), Err(CheckpointError::BadMagic)));
    let mut future = bytes.clone();
    future[8] = 9;
    assert!(matches!(read_checkpoint(&future[..]), Err(CheckpointError::Version(9))));
    assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
}
