#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use recourse_core::attribution::{BackgroundSet, DEFAULT_BACKGROUND_SEED, DEFAULT_BACKGROUND_SIZE};
use recourse_core::{load_csv, train_logistic, DisplaySelection, Engine, TrainConfig};
use recourse_service::{router, AppState, ServiceConfig};
use tower::ServiceExt;

pub const FIXTURE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../core/fixtures/credit_risk.csv"
);

pub fn build_engine(display: DisplaySelection) -> Engine {
    let ds = load_csv(FIXTURE).unwrap();
    let model = train_logistic(&ds, &TrainConfig::default()).unwrap().model;
    let bg = BackgroundSet::sample(&ds, DEFAULT_BACKGROUND_SIZE, DEFAULT_BACKGROUND_SEED);
    Engine::build(ds, Arc::new(model), bg, display).unwrap()
}

pub fn engine() -> Arc<Engine> {
    static ENGINE: OnceLock<Arc<Engine>> = OnceLock::new();
    ENGINE
        .get_or_init(|| Arc::new(build_engine(DisplaySelection::ByImportance)))
        .clone()
}

/// A router over the shared engine with its own empty session store.
pub fn app() -> Router {
    let config = ServiceConfig::default();
    router(AppState::with_engine(engine(), &config), &config)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

pub async fn call_json(
    app: &Router,
    method: &str,
    uri: &str,
    body: &str,
) -> (StatusCode, serde_json::Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}
