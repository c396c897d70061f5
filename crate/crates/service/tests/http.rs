use std::sync::Arc;

use affect_dialog::affect::{ClassifierConfig, VadLexicon, VadPrototypeClassifier, VadVector};
use affect_dialog::annotation::{gamma_grid, AnnotationRecord, AnnotationStore, CurveOptions, GammaAssigner};
use affect_dialog::model::{ModelConfig, ModelVariant, Seq2Seq, VocabVad};
use affect_dialog::pipeline::{GenerationResponse, Generator};
use affect_dialog::text::Vocabulary;
use affect_dialog_service::server::{router, AppState, ErrorBody, GammaCurveReport, Health};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn generator() -> Generator {
    let vocab = Vocabulary::from_words(["hello", "there", "happy", "sad", "angry", "day"]);
    let lex = VadLexicon::from_entries([
        ("happy", VadVector::new(1.0, 1.0, 1.0)),
        ("sad", VadVector::new(0.0, 0.0, 0.0)),
        ("angry", VadVector::new(0.0, 1.0, 1.0)),
    ])
    .unwrap();
    let vad = VocabVad::from_lexicon(&vocab, &lex);
    let mut cfg = ModelConfig::small(vocab.len(), 4, 4, ModelVariant::WI_WE);
    cfg.max_length = 4;
    let fwd = Seq2Seq::new(cfg.clone(), vad.clone(), 1).unwrap();
    let rev = Seq2Seq::new(ModelConfig { variant: ModelVariant::WI, ..cfg }, vad, 2).unwrap();
    let classifier = Box::new(VadPrototypeClassifier::new(ClassifierConfig::default(), lex));
    let mut g = Generator::new(fwd, Some(rev), vocab, classifier).unwrap();
    g.beam_size = 6;
    g
}

fn app(dir: &tempfile::TempDir, assign: bool) -> (Router, Arc<AppState>) {
    let store = AnnotationStore::open(dir.path().join("ann.jsonl")).unwrap();
    let state = Arc::new(AppState {
        generator: generator(),
        store,
        assigner: assign.then(GammaAssigner::default),
        curve: CurveOptions::default(),
    });
    (router(state.clone()), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

#[tokio::test]
async fn health_reports_model_and_store() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(&dir, false);
    let (status, body) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let h: Health = serde_json::from_value(body).unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.vocab_size, 10);
    assert_eq!(h.variant, "wi+we");
    assert!(h.reverse_model);
    assert_eq!(h.annotations, 0);
}

#[tokio::test]
async fn generate_uses_request_fields_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let (app, state) = app(&dir, false);
    let (status, body) = call(&app, "POST", "/generate", Some(json!({"prompt": "hello there", "emotion": "anger"}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let out: GenerationResponse = serde_json::from_value(body.clone()).unwrap();
    assert_eq!(out.gamma, 4.2);
    assert_eq!(out.beam_size, 6);
    assert_eq!(*out.target_emotion.probs(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(out.response, out.candidates[out.selected].text);
    for field in ["response", "selected", "target_emotion", "gamma", "beam_size", "candidates"] {
        assert!(body.get(field).is_some(), "missing {field}");
    }

    // identical to calling the generator directly, and deterministic
    let direct = state
        .generator
        .generate(&serde_json::from_value(json!({"prompt": "hello there", "emotion": "anger"})).unwrap())
        .unwrap();
    assert_eq!(serde_json::to_value(&direct).unwrap(), serde_json::to_value(&out).unwrap());

    let (_, body) = call(
        &app,
        "POST",
        "/generate",
        Some(json!({"prompt": "hello", "emotion": [0, 0, 0.5, 0.5, 0, 0], "gamma": 1.5, "beam_size": 1})),
    )
    .await;
    let out: GenerationResponse = serde_json::from_value(body).unwrap();
    assert_eq!(out.gamma, 1.5);
    assert_eq!(out.candidates.len(), 1);
}

#[tokio::test]
async fn generate_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(&dir, false);
    let (status, body) = call(&app, "POST", "/generate", Some(json!({"prompt": "hello", "emotion": "boredom"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let e: ErrorBody = serde_json::from_value(body).unwrap();
    assert!(e.error.contains("boredom"));
    let (status, _) = call(&app, "POST", "/generate", Some(json!({"prompt": "hello", "emotion": "joy", "beam_size": 0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/generate", Some(json!({"prompt": "   ", "emotion": "joy"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    // malformed bodies get the same structured error
    let (status, body) = call(&app, "POST", "/generate", Some(json!({"emotion": "joy"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(serde_json::from_value::<ErrorBody>(body).unwrap().error.contains("prompt"));
}

#[tokio::test]
async fn assigner_rotates_gamma_when_omitted() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(&dir, true);
    let grid = gamma_grid();
    for want in &grid[..3] {
        let (_, body) = call(&app, "POST", "/generate", Some(json!({"prompt": "hello", "emotion": "joy", "beam_size": 2}))).await;
        assert_eq!(body["gamma"].as_f64().unwrap(), *want);
    }
    // an explicit gamma is left alone
    let (_, body) = call(&app, "POST", "/generate", Some(json!({"prompt": "hello", "emotion": "joy", "gamma": 7.0, "beam_size": 2}))).await;
    assert_eq!(body["gamma"].as_f64().unwrap(), 7.0);
}

fn annotation(gamma: f64, vad: [f64; 3], delta_e: Option<f64>) -> Value {
    let mut v = json!({
        "prompt": "hello there",
        "response": "happy day",
        "target_emotion": [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        "gamma_used": gamma,
        "annotated_vad": vad,
    });
    if let Some(d) = delta_e {
        v["delta_e"] = json!(d);
    }
    v
}

#[tokio::test]
async fn annotations_round_trip_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(&dir, false);
    // sadness maps to VAD [0, 0, 0]; the judgment [0, 0.6, 0.8] is 1 away
    let (status, body) = call(&app, "POST", "/annotations", Some(annotation(0.0, [0.0, 0.6, 0.8], Some(1.0)))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let rec: AnnotationRecord = serde_json::from_value(body.clone()).unwrap();
    assert_eq!(rec.id, 1);
    assert!((rec.delta_e - 1.0).abs() < 1e-12);
    for field in ["id", "prompt", "response", "target_emotion", "gamma_used", "annotated_vad", "delta_e", "timestamp"] {
        assert!(body.get(field).is_some(), "missing {field}");
    }

    let (status, _) = call(&app, "POST", "/annotations", Some(annotation(0.0, [0.0, 0.6, 0.8], Some(1.0 + 1e-3)))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/annotations", Some(annotation(0.0, [0.0, 1.2, 0.8], None))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = call(&app, "GET", "/annotations", None).await;
    assert_eq!(status, StatusCode::OK);
    let all: Vec<AnnotationRecord> = serde_json::from_value(body).unwrap();
    assert_eq!(all, vec![rec.clone()]);

    // durable: a fresh store over the same file sees the record
    let reopened = AnnotationStore::open(dir.path().join("ann.jsonl")).unwrap();
    assert_eq!(reopened.records(), vec![rec]);
}

#[tokio::test]
async fn gamma_curve_from_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(&dir, false);
    let (status, _) = call(&app, "GET", "/gamma-curve", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let grid = gamma_grid();
    // ΔE of 0.6 at grid[0] and grid[8]'s pair 0 and 0.2 (mean 0.1)
    for (g, vad) in [(grid[0], [0.0, 0.6, 0.0]), (grid[8], [0.0, 0.0, 0.0]), (grid[8] + 0.01, [0.2, 0.0, 0.0])] {
        let (status, _) = call(&app, "POST", "/annotations", Some(annotation(g, vad, None))).await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let (status, body) = call(&app, "GET", "/gamma-curve", None).await;
    assert_eq!(status, StatusCode::OK);
    let report: GammaCurveReport = serde_json::from_value(body).unwrap();
    assert_eq!(report.curve.grid, grid);
    assert_eq!(report.curve.counts[0], 1);
    assert_eq!(report.curve.counts[8], 2);
    assert!((report.curve.mean_delta_e[8].unwrap() - 0.1).abs() < 1e-12);
    assert!(report.curve.mean_delta_e[1].is_none());
    assert_eq!(report.gamma_opt, grid[8]);
    assert_eq!(report.per_emotion.keys().collect::<Vec<_>>(), vec!["sadness"]);

    // judgments with VAD norm at most 0.5 are dropped by the filter
    let (_, body) = call(&app, "GET", "/gamma-curve?min_vad_norm=0.5", None).await;
    let report: GammaCurveReport = serde_json::from_value(body).unwrap();
    assert_eq!(report.curve.counts.iter().sum::<usize>(), 1);
    assert_eq!(report.gamma_opt, 0.0);
}

#[tokio::test]
async fn concurrent_annotations_get_distinct_ids() {
    let dir = tempfile::tempdir().unwrap();
    let (app, state) = app(&dir, false);
    let tasks: Vec<_> = (0..16)
        .map(|i| {
            let app = app.clone();
            tokio::spawn(async move { call(&app, "POST", "/annotations", Some(annotation(i as f64 * 0.5, [0.1, 0.1, 0.1], None))).await })
        })
        .collect();
    let mut ids = Vec::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::CREATED);
        ids.push(body["id"].as_u64().unwrap());
    }
    ids.sort();
    assert_eq!(ids, (1..=16).collect::<Vec<u64>>());
    assert_eq!(state.store.len(), 16);
}
