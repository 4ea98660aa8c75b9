use std::sync::{Arc, OnceLock};
use std::time::Duration;

use super::*;
use crate::corpus::{
    aggregate_context, context_from_history, encode_corpus, parse_dialogues, Dialogue,
    EntityLexicon, KnowledgeBase, Turn, Vocabulary,
};
use crate::error::Error;
use crate::model::Variant;
use crate::train::{train_model, StopReason, TrainConfig, TrainOptions};

const TOY: &str = "\
1 hi\thello
2 cheap thai please\tapi_call thai cheap
3 bangkok_city R_phone bangkok_city_phone
4 <SILENCE>\tbangkok_city is a thai place
5 thanks\tyou are welcome
";

const KB: &str = "\
bangkok_city R_cuisine thai
bangkok_city R_price cheap
bangkok_city R_phone bangkok_city_phone
";

/// A copy model trained until it reproduces the toy dialogue exactly.
fn toy_engine() -> &'static ChatEngine {
    static ENGINE: OnceLock<ChatEngine> = OnceLock::new();
    ENGINE.get_or_init(|| {
        let dialogues = parse_dialogues(TOY, "toy".as_ref()).unwrap();
        let lexicon = EntityLexicon::from_pairs(
            [
                ("thai", "R_cuisine"),
                ("cheap", "R_price"),
                ("bangkok_city", "R_name"),
                ("bangkok_city_phone", "R_phone"),
            ],
            false,
        )
        .unwrap();
        let vocab = Vocabulary::build(&dialogues);
        let samples = encode_corpus(&dialogues, &vocab, &lexicon);
        let config = TrainConfig {
            variant: Variant::Copy,
            embedding_size: 12,
            hidden_size: 16,
            keep_prob: 1.0,
            learning_rate: 1e-2,
            max_epochs: 300,
            patience: 0,
            target_accuracy: Some(1.0),
            max_response_len: 10,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train_model(&config, &vocab, &lexicon, &samples, &samples, &TrainOptions::default()).unwrap();
        assert_eq!(out.report.stop, StopReason::TargetReached);
        let kb = KnowledgeBase::parse(KB, "kb".as_ref()).unwrap();
        ChatEngine::new(&out.best, vocab, lexicon, kb, 10).unwrap()
    })
}

fn store() -> SessionStore {
    SessionStore::new(Duration::from_secs(600))
}

#[test]
fn greeting_with_normalized_trace() {
    let engine = toy_engine();
    let r = engine.respond(&[], "hi").unwrap();
    assert_eq!(r.response, "hello");
    assert!(!r.api_call);
    assert_eq!(r.trace.len(), 1);
    let f = &r.trace[0];
    assert_eq!((f.t, f.token.as_str(), f.was_copy), (1, "hello", false));
    assert_eq!(f.context, vec!["hi"]);
    assert_eq!(f.weights.len(), f.context.len());
    assert!((f.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

#[test]
fn api_call_appends_kb_results() {
    let engine = toy_engine();
    let s = store();
    let id = s.create();
    assert!(s.get(&id).unwrap().history.is_empty());
    let first = s.message(engine, &id, "hi").unwrap();
    let r = s.message(engine, &id, "cheap thai please").unwrap();
    assert_eq!(r.response, "api_call thai cheap");
    assert!(r.api_call);
    assert!(r.trace[0].context.len() > first.trace[0].context.len());
    let session = s.get(&id).unwrap();
    assert_eq!(session.history.len(), 2);
    assert_eq!(session.history[1].kb_results.len(), 3);

    let r = s.message(engine, &id, "<SILENCE>").unwrap();
    assert_eq!(r.response, "bangkok_city is a thai place");
    for f in &r.trace {
        assert_eq!(f.weights.len(), f.context.len());
        assert!((f.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        if f.was_copy {
            assert!(f.context.contains(&f.token));
        }
    }
}

#[test]
fn session_context_matches_corpus_aggregation() {
    let engine = toy_engine();
    let s = store();
    let id = s.create();
    let inputs = ["hi", "cheap thai please", "<SILENCE>", "thanks"];
    for text in &inputs[..3] {
        s.message(engine, &id, text).unwrap();
    }
    let history = s.get(&id).unwrap().history;
    let mut turns = history.clone();
    turns.push(Turn::new(inputs[3], "placeholder"));
    let dialogue = Dialogue::new(turns).unwrap();
    let user: Vec<String> = inputs[3].split(' ').map(str::to_string).collect();
    assert_eq!(context_from_history(&history, &user), aggregate_context(&dialogue, 4).unwrap());
    let r = s.message(engine, &id, inputs[3]).unwrap();
    assert_eq!(r.trace[0].context, aggregate_context(&dialogue, 4).unwrap());
}

#[test]
fn replaying_a_session_is_deterministic() {
    let engine = toy_engine();
    let s = store();
    let (a, b) = (s.create(), s.create());
    assert_ne!(a, b);
    for text in ["hi", "cheap thai please", "<SILENCE>", "thanks"] {
        assert_eq!(s.message(engine, &a, text).unwrap(), s.message(engine, &b, text).unwrap());
    }
}

#[test]
fn errors_for_bad_requests() {
    let engine = toy_engine();
    let s = store();
    let id = s.create();
    assert!(matches!(s.message(engine, &id, "   "), Err(Error::InvalidArgument(_))));
    assert!(matches!(s.message(engine, "nope", "hi"), Err(Error::SessionNotFound(_))));
    assert!(s.get(&id).unwrap().history.is_empty());
}

#[test]
fn concurrent_creations_are_distinct_and_isolated() {
    let engine = toy_engine();
    let s = Arc::new(store());
    let ids: Vec<String> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..100).map(|_| scope.spawn(|| s.create())).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let distinct: std::collections::BTreeSet<_> = ids.iter().collect();
    assert_eq!(distinct.len(), 100);
    assert_eq!(s.len(), 100);
    s.message(engine, &ids[0], "hi").unwrap();
    assert_eq!(s.get(&ids[0]).unwrap().history.len(), 1);
    assert!(ids[1..].iter().all(|id| s.get(id).unwrap().history.is_empty()));
}

#[test]
fn idle_sessions_expire() {
    let s = SessionStore::new(Duration::ZERO);
    let id = s.create();
    std::thread::sleep(Duration::from_millis(5));
    assert_eq!(s.expire_idle(), 1);
    assert!(s.is_empty());
    assert!(s.get(&id).is_err());
    let keep = store();
    keep.create();
    assert_eq!(keep.expire_idle(), 0);
}

#[test]
fn model_info_is_stable() {
    let engine = toy_engine();
    let info = engine.info();
    assert_eq!(info.variant, Variant::Copy);
    assert_eq!(info.entity_types, vec!["R_cuisine", "R_name", "R_phone", "R_price"]);
    assert_eq!(info.checkpoint_hash.len(), 32);
    assert_eq!(info, engine.info());
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let engine = toy_engine();
    let other = Vocabulary::from_tokens(["a", "b"]);
    let ckpt = crate::model::Checkpoint {
        params: engine.model().cast(),
        vocab_hash: "0".repeat(32),
    };
    let lex = EntityLexicon::from_pairs(Vec::<(String, String)>::new(), false).unwrap();
    assert!(matches!(
        ChatEngine::new(&ckpt, other, lex, KnowledgeBase::new(Vec::new()), 5),
        Err(Error::VocabMismatch { .. })
    ));
}
