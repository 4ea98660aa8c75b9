mod common;

use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use copydial::corpus::{encode_corpus, parse_dialogues};
use copydial::train::{train_model, TrainOptions};
use copydial::{ChatEngine, EntityLexicon, KnowledgeBase, TrainConfig, Vocabulary};
use copydial_cli::http::{router, AppState};
use serde_json::Value;
use tower::ServiceExt;

fn engine() -> ChatEngine {
    static CKPT: OnceLock<copydial::Checkpoint> = OnceLock::new();
    let dialogues = parse_dialogues(common::TOY, "toy".as_ref()).unwrap();
    let lexicon = EntityLexicon::parse(common::LEXICON, false).unwrap();
    let vocab = Vocabulary::build(&dialogues);
    let config = TrainConfig::parse(common::TOY_CONFIG).unwrap();
    let ckpt = CKPT.get_or_init(|| {
        let samples = encode_corpus(&dialogues, &vocab, &lexicon);
        train_model(&config, &vocab, &lexicon, &samples, &samples, &TrainOptions::default())
            .unwrap()
            .best
    });
    let kb = KnowledgeBase::parse(common::KB, "kb".as_ref()).unwrap();
    ChatEngine::new(ckpt, vocab, lexicon, kb, config.max_response_len).unwrap()
}

fn app(with_model: bool) -> axum::Router {
    let engine = with_model.then(engine);
    router(Arc::new(AppState::new(engine, Duration::from_secs(600))))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), 1 << 20).await.unwrap();
    let json = serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()));
    (status, json)
}

async fn new_session(app: &axum::Router) -> String {
    let (status, body) = call(app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::OK);
    body["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn health_without_a_model() {
    let app = app(false);
    assert_eq!(call(&app, "GET", "/health", None).await.0, StatusCode::OK);
    assert_eq!(call(&app, "GET", "/model", None).await.0, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(call(&app, "POST", "/sessions", None).await.0, StatusCode::SERVICE_UNAVAILABLE);
    let msg = serde_json::json!({ "text": "hi" });
    let (status, body) = call(&app, "POST", "/sessions/abc/messages", Some(msg)).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(body["error"].is_string());
}

#[tokio::test]
async fn model_description() {
    let app = app(true);
    let (status, body) = call(&app, "GET", "/model", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["variant"], "copy");
    assert_eq!(body["dims"]["hidden"], 16);
    assert_eq!(body["vocab_size"], engine().info().vocab_size);
    assert_eq!(body["entity_types"], serde_json::json!(["R_cuisine", "R_name", "R_phone", "R_price"]));
    assert_eq!(body["checkpoint_hash"].as_str().unwrap().len(), 32);
}

#[tokio::test]
async fn a_conversation_with_traces() {
    let app = app(true);
    let id = new_session(&app).await;
    let uri = format!("/sessions/{id}/messages");
    let (status, r) = call(&app, "POST", &uri, Some(serde_json::json!({ "text": "hi" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["response"], "hello");
    assert_eq!(r["api_call"], false);
    assert_eq!(r["trace"][0]["t"], 1);
    assert_eq!(r["trace"][0]["token"], "hello");
    assert_eq!(r["trace"][0]["context"], serde_json::json!(["hi"]));

    let (_, r) = call(&app, "POST", &uri, Some(serde_json::json!({ "text": "cheap thai please" }))).await;
    assert_eq!(r["response"], "api_call thai cheap");
    assert_eq!(r["api_call"], true);
    let (_, r) = call(&app, "POST", &uri, Some(serde_json::json!({ "text": "<SILENCE>" }))).await;
    assert_eq!(r["response"], "bangkok_city is a thai place");
    let trace = r["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 5);
    for f in trace {
        let w: Vec<f64> = serde_json::from_value(f["weights"].clone()).unwrap();
        assert_eq!(w.len(), f["context"].as_array().unwrap().len());
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        if f["was_copy"] == true {
            assert!(f["context"].as_array().unwrap().contains(&f["token"]));
        }
    }
}

#[tokio::test]
async fn request_errors() {
    let app = app(true);
    let msg = serde_json::json!({ "text": "hi" });
    let (status, body) = call(&app, "POST", "/sessions/nope/messages", Some(msg)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nope"));

    let id = new_session(&app).await;
    let uri = format!("/sessions/{id}/messages");
    for text in ["", "   "] {
        let (status, _) = call(&app, "POST", &uri, Some(serde_json::json!({ "text": text }))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
    }
    let (status, _) = call(&app, "POST", &uri, Some(serde_json::json!({ "words": "hi" }))).await;
    assert!(status.is_client_error());
    assert_eq!(call(&app, "GET", "/nowhere", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_sessions_are_independent() {
    let app = app(true);
    let tasks: Vec<_> = (0..100)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move { new_session(&app).await })
        })
        .collect();
    let mut ids = Vec::new();
    for t in tasks {
        ids.push(t.await.unwrap());
    }
    let distinct: std::collections::BTreeSet<_> = ids.iter().collect();
    assert_eq!(distinct.len(), 100);

    let replies: Vec<_> = ids[..10]
        .iter()
        .map(|id| {
            let app = app.clone();
            let uri = format!("/sessions/{id}/messages");
            tokio::spawn(async move {
                call(&app, "POST", &uri, Some(serde_json::json!({ "text": "hi" }))).await
            })
        })
        .collect();
    let mut first = None;
    for r in replies {
        let (status, body) = r.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert_eq!(*first.get_or_insert(body.clone()), body);
    }
}
