#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

use sepsislab::data::{generate_cohort, GeneratorConfig, PatientRecord, Vocabulary};
use sepsislab::predictor::LogisticModel;
use sepsislab::uncertainty::{fit_imputation, ImputationModel, PolicyConfig};
use sepsislab_service::store::Store;
use sepsislab_service::{router, AppState};

pub struct Fixture {
    pub vocab: Vocabulary,
    pub model: LogisticModel,
    pub imputation: ImputationModel,
    pub records: Vec<PatientRecord>,
}

/// Logistic model and imputation fitted on a small generated cohort.
pub fn fixture() -> Fixture {
    let cohort = generate_cohort(7, 240, &GeneratorConfig::default()).unwrap();
    let model = LogisticModel::fit_records(&cohort.records, &cohort.vocabulary, 1e-2).unwrap();
    let imputation = fit_imputation(&cohort.records, &cohort.vocabulary).unwrap();
    Fixture {
        vocab: cohort.vocabulary,
        model,
        imputation,
        records: cohort.records,
    }
}

pub fn policy() -> PolicyConfig {
    PolicyConfig {
        mcs_samples: 40,
        counterfactual_samples: 40,
        seed: 11,
        ..PolicyConfig::default()
    }
}

pub fn state_with(f: &Fixture, model: LogisticModel, store: Store) -> Arc<AppState> {
    Arc::new(AppState::new(Box::new(model), f.imputation.clone(), f.vocab.clone(), policy(), store).unwrap())
}

pub fn state(f: &Fixture) -> Arc<AppState> {
    state_with(f, f.model.clone(), Store::in_memory().unwrap())
}

pub async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(state.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

pub async fn get_json(state: &Arc<AppState>, uri: &str) -> serde_json::Value {
    let (status, body) = call(state, "GET", uri, None).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {body}");
    serde_json::from_str(&body).unwrap()
}

pub async fn post_json(state: &Arc<AppState>, uri: &str, body: serde_json::Value) -> (StatusCode, serde_json::Value) {
    let (status, body) = call(state, "POST", uri, Some(body)).await;
    (status, serde_json::from_str(&body).unwrap())
}

/// A live patient with nothing observed; returns its id.
pub async fn new_patient(state: &Arc<AppState>, id: &str) -> String {
    let (status, body) = post_json(
        state,
        "/api/patients",
        serde_json::json!({"patient_id": id, "age": 67.0, "sex": "M", "history_flags": [false, true, false, false]}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body["patient_id"].as_str().unwrap().to_string()
}

pub async fn observe(state: &Arc<AppState>, id: &str, variable: &str, value: f64, time: f64) -> serde_json::Value {
    let (status, body) = post_json(
        state,
        &format!("/api/patients/{id}/observations"),
        serde_json::json!({"variable": variable, "value": value, "time": time}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body
}
