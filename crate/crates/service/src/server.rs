//! HTTP API over a frozen generator and the annotation store.

use std::sync::Arc;

use affect_dialog::annotation::{
    compute_gamma_curve, fit_gamma_opt, per_emotion_curves, AnnotationRecord, AnnotationStore, CurveOptions,
    GammaAssigner, GammaCurve, NewAnnotation,
};
use affect_dialog::pipeline::{GenerationRequest, GenerationResponse, Generator};
use affect_dialog::Error;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub struct AppState {
    pub generator: Generator,
    pub store: AnnotationStore,
    /// When set, generation requests without a gamma take the next grid
    /// value in turn instead of the generator default.
    pub assigner: Option<GammaAssigner>,
    pub curve: CurveOptions,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/generate", post(generate))
        .route("/annotations", post(record_annotation).get(list_annotations))
        .route("/gamma-curve", get(gamma_curve))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io(_) | Error::Checkpoint(_) | Error::NonFinite(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError(r.status(), r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError(r.status(), r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub vocab_size: usize,
    pub variant: String,
    pub reverse_model: bool,
    pub annotations: usize,
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        vocab_size: s.generator.vocab().len(),
        variant: s.generator.forward().config().variant.to_string(),
        reverse_model: s.generator.reverse().is_some(),
        annotations: s.store.len(),
    })
}

async fn generate(
    State(s): State<Arc<AppState>>,
    body: Result<Json<GenerationRequest>, JsonRejection>,
) -> Result<Json<GenerationResponse>, ApiError> {
    let Json(mut req) = body?;
    if req.gamma.is_none() {
        req.gamma = s.assigner.as_ref().map(GammaAssigner::next_gamma);
    }
    let out = tokio::task::spawn_blocking(move || s.generator.generate(&req))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(out))
}

async fn record_annotation(
    State(s): State<Arc<AppState>>,
    body: Result<Json<NewAnnotation>, JsonRejection>,
) -> Result<(StatusCode, Json<AnnotationRecord>), ApiError> {
    let Json(new) = body?;
    let rec = tokio::task::spawn_blocking(move || s.store.record(new))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(rec)))
}

async fn list_annotations(State(s): State<Arc<AppState>>) -> Json<Vec<AnnotationRecord>> {
    Json(s.store.records())
}

#[derive(Debug, Default, Deserialize)]
pub struct CurveQuery {
    pub min_vad_norm: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FittedCurve {
    pub curve: GammaCurve,
    pub gamma_opt: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GammaCurveReport {
    pub curve: GammaCurve,
    pub gamma_opt: f64,
    pub per_emotion: std::collections::BTreeMap<String, FittedCurve>,
}

/// Overall and per-emotion curves from one snapshot of the store.
pub fn gamma_report(records: &[AnnotationRecord], opts: &CurveOptions) -> affect_dialog::Result<GammaCurveReport> {
    let curve = compute_gamma_curve(records, opts)?;
    let gamma_opt = fit_gamma_opt(&curve)?;
    let per_emotion = per_emotion_curves(records, opts)
        .into_iter()
        .filter_map(|(name, c)| fit_gamma_opt(&c).ok().map(|g| (name, FittedCurve { curve: c, gamma_opt: g })))
        .collect();
    Ok(GammaCurveReport { curve, gamma_opt, per_emotion })
}

async fn gamma_curve(
    State(s): State<Arc<AppState>>,
    query: Result<Query<CurveQuery>, QueryRejection>,
) -> Result<Json<GammaCurveReport>, ApiError> {
    let Query(q) = query?;
    let opts = CurveOptions { min_vad_norm: q.min_vad_norm.or(s.curve.min_vad_norm) };
    let records = s.store.records();
    if records.is_empty() {
        return Err(ApiError(StatusCode::NOT_FOUND, "no annotations recorded yet".into()));
    }
    Ok(Json(gamma_report(&records, &opts)?))
}
