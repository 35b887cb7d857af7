mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use serde_json::{json, Value};

use common::*;
use sepsislab::data::{write_cohort, Cohort};
use sepsislab::predictor::LogisticModel;
use sepsislab::recommender::{project_trajectory, recommend};
use sepsislab::uncertainty::predict_uncertain;
use sepsislab_service::app::RiskColor;
use sepsislab_service::store::Store;

const LABS: [&str; 14] = [
    "Lactate", "WBC", "Creatinine", "Bilirubin", "Platelets", "Glucose", "BUN", "Sodium", "Potassium",
    "Hemoglobin", "Bicarbonate", "Chloride", "INR", "Albumin",
];

fn seeded_dir(f: &Fixture) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let cohort = Cohort {
        vocabulary: f.vocab.clone(),
        records: f.records.clone(),
    };
    write_cohort(dir.path(), &cohort).unwrap();
    dir
}

#[tokio::test]
async fn empty_store_lists_nothing() {
    let f = fixture();
    let s = state(&f);
    assert_eq!(get_json(&s, "/api/patients").await, json!([]));
}

#[tokio::test]
async fn list_matches_recompute_and_sort() {
    let f = fixture();
    let s = state(&f);
    let dir = seeded_dir(&f);
    assert_eq!(s.seed_from_cohort(dir.path(), Some(12)).unwrap(), 12);
    // a second seeding leaves a non-empty store alone
    assert_eq!(s.seed_from_cohort(dir.path(), Some(12)).unwrap(), 0);

    let listed = get_json(&s, "/api/patients").await;
    let mut oracle: Vec<(String, f64)> = f.records[..12]
        .iter()
        .map(|r| {
            let t = r.label.unwrap().time;
            let mut cut = r.clone();
            cut.retain_observations(|o| o.time <= t);
            let p = predict_uncertain(&f.model, &f.imputation, &f.vocab, &cut, t, &policy()).unwrap();
            (r.patient_id.clone(), p.p_mean)
        })
        .collect();
    oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let got: Vec<(String, f64)> = listed
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["patient_id"].as_str().unwrap().to_string(), p["p_mean"].as_f64().unwrap()))
        .collect();
    assert_eq!(got, oracle);
    for p in listed.as_array().unwrap() {
        assert!(!p["alias"].as_str().unwrap().is_empty());
        assert!(p.get("name").is_none());
    }
}

#[tokio::test]
async fn high_risk_patient_is_red() {
    let f = fixture();
    let n = f.vocab.len();
    // constant risk 0.7 whatever is observed
    let model = LogisticModel {
        weights: vec![0.0; n],
        bias: (0.7f64 / 0.3).ln(),
    };
    let s = state_with(&f, model, Store::in_memory().unwrap());
    new_patient(&s, "p1").await;
    let listed = get_json(&s, "/api/patients").await;
    assert!((listed[0]["p_mean"].as_f64().unwrap() - 0.7).abs() < 1e-12);
    assert_eq!(listed[0]["color"], json!(RiskColor::Red));
}

#[tokio::test]
async fn trajectory_counterfactual_only_on_request() {
    let f = fixture();
    let s = state(&f);
    let id = new_patient(&s, "p1").await;
    for (v, x) in [("HR", 118.0), ("RR", 26.0), ("Temp", 38.6), ("SBP", 92.0)] {
        observe(&s, &id, v, x, 2.0).await;
    }
    let base = get_json(&s, "/api/patients/p1/trajectory").await;
    assert!(base.get("counterfactual").is_none());
    assert!(base["seed"].as_u64().is_some());
    assert_eq!(base["history"].as_array().unwrap().len(), 3);
    assert_eq!(base["projection"].as_array().unwrap().len(), 4);

    let cf = get_json(&s, "/api/patients/p1/trajectory?hypothetical=Lactate,WBC").await;
    let now_base = &cf["history"].as_array().unwrap()[2];
    let now_cf = &cf["counterfactual"].as_array().unwrap()[0];
    let width = |p: &Value| p["band_high"].as_f64().unwrap() - p["band_low"].as_f64().unwrap();
    assert!(width(now_cf) < width(now_base), "{now_cf} vs {now_base}");

    // bypass the API
    let (row, _) = s.ranking("p1").unwrap();
    let store_record = {
        let mut r = sepsislab::data::PatientRecord::new("p1", row.static_info.clone(), vec![], None).unwrap();
        for (v, x) in [("HR", 118.0), ("RR", 26.0), ("Temp", 38.6), ("SBP", 92.0)] {
            r.push_observation(sepsislab::data::Observation {
                variable: f.vocab.id_of(v).unwrap(),
                value: x,
                time: 2.0,
            })
            .unwrap();
        }
        r
    };
    let hyp = [f.vocab.id_of("Lactate").unwrap(), f.vocab.id_of("WBC").unwrap()];
    let direct = project_trajectory(&f.model, &f.imputation, &f.vocab, &store_record, 2.0, &policy(), &hyp).unwrap();
    assert_eq!(serde_json::to_value(&direct.history).unwrap(), cf["history"]);
    assert_eq!(serde_json::to_value(&direct.counterfactual).unwrap(), cf["counterfactual"]);
    assert_eq!(json!(direct.seed), cf["seed"]);
}

#[tokio::test]
async fn trajectory_errors() {
    let f = fixture();
    let s = state(&f);
    new_patient(&s, "p1").await;
    observe(&s, "p1", "Lactate", 3.0, 1.0).await;

    let (status, body) = call(&s, "GET", "/api/patients/nobody/trajectory", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let body: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(body["code"], "not_found");
    assert!(body["message"].is_string());

    let (status, body) = call(&s, "GET", "/api/patients/p1/trajectory?hypothetical=WBC,Lactate", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(body["code"], "already_observed");
    assert_eq!(body["detail"]["variable"], "Lactate");

    let (status, body) = call(&s, "GET", "/api/patients/p1/trajectory?hypothetical=Procalcitonin", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body.contains("unknown_variable"));
}

#[tokio::test]
async fn recommendations_match_the_recommender() {
    let f = fixture();
    let s = state(&f);
    new_patient(&s, "p1").await;
    observe(&s, "p1", "HR", 121.0, 0.5).await;
    // leave exactly four labs missing
    for (i, lab) in LABS[4..].iter().enumerate() {
        let mean = f.vocab.get(f.vocab.id_of(lab).unwrap()).population_mean;
        observe(&s, "p1", lab, mean * (1.0 + 0.05 * i as f64), 1.0).await;
    }
    let all = get_json(&s, "/api/patients/p1/recommendations?top=10").await;
    let items = all["items"].as_array().unwrap();
    assert_eq!(items.len(), 4);
    assert!(all.get("reason").is_none());

    let (row, _) = s.ranking("p1").unwrap();
    let detail = get_json(&s, "/api/patients/p1").await;
    let mut record = sepsislab::data::PatientRecord::new("p1", row.static_info.clone(), vec![], None).unwrap();
    for o in detail["observations"].as_array().unwrap() {
        record
            .push_observation(sepsislab::data::Observation {
                variable: f.vocab.id_of(o["variable"].as_str().unwrap()).unwrap(),
                value: o["value"].as_f64().unwrap(),
                time: o["time"].as_f64().unwrap(),
            })
            .unwrap();
    }
    let direct = recommend(&f.model, &f.imputation, &f.vocab, &record, 1.0, &policy()).unwrap();
    for (item, est) in items.iter().zip(&direct.ranked) {
        assert_eq!(item["variable"], json!(f.vocab.get(est.variables[0]).name));
        assert_eq!(item["u_before"].as_f64().unwrap(), est.u_before);
        assert_eq!(item["u_after"].as_f64().unwrap(), est.u_after);
        assert_eq!(item["reduction"].as_f64().unwrap(), est.reduction);
        let pct = item["reduction_percent"].as_f64().unwrap();
        assert!((pct - 100.0 * est.reduction / est.u_before).abs() < 1e-9);
    }

    let top1 = get_json(&s, "/api/patients/p1/recommendations?top=1").await;
    assert_eq!(top1["items"].as_array().unwrap().len(), 1);
    assert_eq!(top1["items"][0], items[0]);

    let (status, _) = call(&s, "GET", "/api/patients/p1/recommendations?top=many", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&s, "GET", "/api/patients/p2/recommendations", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn fully_observed_patient_has_nothing_to_recommend() {
    let f = fixture();
    let s = state(&f);
    new_patient(&s, "p1").await;
    for lab in LABS {
        let mean = f.vocab.get(f.vocab.id_of(lab).unwrap()).population_mean;
        observe(&s, "p1", lab, mean, 1.0).await;
    }
    let r = get_json(&s, "/api/patients/p1/recommendations").await;
    assert_eq!(r["items"], json!([]));
    assert_eq!(r["reason"], "fully_observed");
}

#[tokio::test]
async fn observation_writes() {
    let f = fixture();
    let s = state(&f);
    new_patient(&s, "p1").await;
    observe(&s, "p1", "HR", 110.0, 1.0).await;

    let first = observe(&s, "p1", "Lactate", 2.5, 2.0).await;
    assert_eq!(first["replaced"], false);
    // read your write: the trajectory now ends at the recomputed prediction
    let traj = get_json(&s, "/api/patients/p1/trajectory").await;
    let last = traj["history"].as_array().unwrap().last().unwrap().clone();
    assert_eq!(last["time"].as_f64().unwrap(), 2.0);
    assert_eq!(last["entropy"], first["after"]["entropy"]);
    assert_eq!(last["p_mean"], first["after"]["p_mean"]);

    let again = observe(&s, "p1", "Lactate", 3.5, 2.0).await;
    assert_eq!(again["replaced"], true);
    let detail = get_json(&s, "/api/patients/p1").await;
    let lactate: Vec<&Value> = detail["observations"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|o| o["variable"] == "Lactate")
        .collect();
    assert_eq!(lactate.len(), 1);
    assert_eq!(lactate[0]["value"].as_f64().unwrap(), 3.5);

    let post = |body: Value| {
        let s = s.clone();
        async move { post_json(&s, "/api/patients/p1/observations", body).await }
    };
    let (st, body) = post(json!({"variable": "Procalcitonin", "value": 1.0, "time": 1.0})).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "unknown_variable");
    let (st, _) = post(json!({"variable": "HR", "value": "high", "time": 1.0})).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, _) = post(json!({"variable": "HR", "value": null, "time": 1.0})).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, body) = post(json!({"variable": "HR", "value": 90.0, "time": -0.5})).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(body["code"], "before_admission");
    let (st, _) = post_json(&s, "/api/patients/zz/observations", json!({"variable": "HR", "value": 90.0, "time": 1.0})).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn observing_the_top_lab_does_not_raise_entropy() {
    let f = fixture();
    let s = state(&f);
    new_patient(&s, "p1").await;
    for (v, x) in [("HR", 124.0), ("RR", 28.0), ("Temp", 38.9), ("SBP", 88.0), ("SpO2", 91.0)] {
        observe(&s, "p1", v, x, 1.0).await;
    }
    let rec = get_json(&s, "/api/patients/p1/recommendations?top=1").await;
    let top = &rec["items"][0];
    let name = top["variable"].as_str().unwrap();
    let se = top["standard_error"].as_f64().unwrap();
    // post the conditional mean of the recommended lab
    let (row, _) = s.ranking("p1").unwrap();
    let mut record = sepsislab::data::PatientRecord::new("p1", row.static_info.clone(), vec![], None).unwrap();
    for (v, x) in [("HR", 124.0), ("RR", 28.0), ("Temp", 38.9), ("SBP", 88.0), ("SpO2", 91.0)] {
        record
            .push_observation(sepsislab::data::Observation { variable: f.vocab.id_of(v).unwrap(), value: x, time: 1.0 })
            .unwrap();
    }
    let scenario = sepsislab::uncertainty::Scenario::new(&f.model, &f.imputation, &f.vocab, &record, 1.0).unwrap();
    let cond = scenario.conditioner(&[]);
    let mean = cond.mean(&scenario.observed_values(&cond, &[]));
    let v = f.vocab.id_of(name).unwrap();
    let z = mean[cond.missing.iter().position(|&m| m == v).unwrap()];
    let resp = observe(&s, "p1", name, f.vocab.get(v).destandardize(z), 1.0).await;
    let before = resp["entropy_before"].as_f64().unwrap();
    let after = resp["entropy_after"].as_f64().unwrap();
    assert!(after <= before + 3.0 * se, "{after} > {before} + 3·{se}");
}

#[tokio::test]
async fn orders_fulfil_atomically() {
    let f = fixture();
    let s = state(&f);
    new_patient(&s, "p1").await;
    observe(&s, "p1", "HR", 101.0, 3.0).await;

    let (st, order) = post_json(&s, "/api/orders", json!({"patient_id": "p1", "variables": ["Lactate"]})).await;
    assert_eq!(st, StatusCode::OK, "{order}");
    assert_eq!(order["order_time"].as_f64().unwrap(), 3.0);
    assert!(order["fulfilled_time"].is_null());
    let id = order["order_id"].as_i64().unwrap();

    let (st, done) = post_json(&s, &format!("/api/orders/{id}/fulfill"), json!({"values": {"Lactate": 4.2}, "time": 3.5})).await;
    assert_eq!(st, StatusCode::OK, "{done}");
    let detail = get_json(&s, "/api/patients/p1").await;
    assert!(detail["observations"]
        .as_array()
        .unwrap()
        .contains(&json!({"variable": "Lactate", "time": 3.5, "value": 4.2})));
    assert_eq!(detail["admitted_hours"].as_f64().unwrap(), 3.5);
    assert_eq!(get_json(&s, &format!("/api/orders/{id}")).await, done["order"]);

    let (st, body) = post_json(&s, &format!("/api/orders/{id}/fulfill"), json!({"values": {"Lactate": 4.0}})).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(body["code"], "already_fulfilled");
    let (st, _) = post_json(&s, "/api/orders/999/fulfill", json!({"values": {"Lactate": 4.0}})).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = post_json(&s, "/api/orders", json!({"patient_id": "zz", "variables": ["Lactate"]})).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = post_json(&s, "/api/orders", json!({"patient_id": "p1", "variables": ["Unobtainium"]})).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    // three labs in one fulfillment: one recompute, one trajectory change
    let (_, order) = post_json(&s, "/api/orders", json!({"patient_id": "p1", "variables": ["WBC", "INR", "BUN"]})).await;
    let id = order["order_id"].as_i64().unwrap();
    let (st, _) = post_json(&s, &format!("/api/orders/{id}/fulfill"), json!({"values": {"WBC": 2.0}, "time": 1.0})).await;
    assert_eq!(st, StatusCode::CONFLICT, "fulfilment before the order");
    let (st, _) = post_json(&s, &format!("/api/orders/{id}/fulfill"), json!({"values": {"Lactate": 2.0}})).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY, "not part of the order");

    let traj_before = get_json(&s, "/api/patients/p1/trajectory").await;
    let n0 = s.recompute_count();
    let (st, done) = post_json(
        &s,
        &format!("/api/orders/{id}/fulfill"),
        json!({"values": {"WBC": 16.0, "INR": 1.8, "BUN": 40.0}}),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(s.recompute_count() - n0, 1);
    assert_eq!(done["order"]["values"].as_array().unwrap().len(), 3);
    assert_eq!(done["order"]["fulfilled_time"].as_f64().unwrap(), 3.5);
    let traj_after = get_json(&s, "/api/patients/p1/trajectory").await;
    assert_ne!(traj_before, traj_after);
    let last = traj_after["history"].as_array().unwrap().last().unwrap().clone();
    assert_eq!(last["p_mean"], done["after"]["p_mean"]);
    // reads are served from the cache
    get_json(&s, "/api/patients").await;
    get_json(&s, "/api/patients/p1").await;
    assert_eq!(s.recompute_count() - n0, 1);
}

#[tokio::test]
async fn repeated_reads_are_identical() {
    let f = fixture();
    let s = state(&f);
    let dir = seeded_dir(&f);
    s.seed_from_cohort(dir.path(), Some(4)).unwrap();
    let id = f.records[0].patient_id.clone();
    for uri in [
        "/api/patients".to_string(),
        format!("/api/patients/{id}"),
        format!("/api/patients/{id}/trajectory?hypothetical=Albumin"),
        format!("/api/patients/{id}/recommendations?top=3"),
    ] {
        let a = call(&s, "GET", &uri, None).await;
        let b = call(&s, "GET", &uri, None).await;
        assert_eq!(a, b, "{uri}");
    }
}

#[tokio::test]
async fn restart_replays_identical_reads() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.sqlite");
    let uris = ["/api/patients", "/api/patients/a", "/api/patients/a/trajectory?hypothetical=Lactate"];
    let before = {
        let s = state_with(&f, f.model.clone(), Store::open(&path).unwrap());
        new_patient(&s, "a").await;
        new_patient(&s, "b").await;
        observe(&s, "a", "HR", 130.0, 1.0).await;
        observe(&s, "b", "Lactate", 5.0, 2.0).await;
        let mut out = Vec::new();
        for u in uris {
            out.push(call(&s, "GET", u, None).await);
        }
        out
    };
    let s = state_with(&f, f.model.clone(), Store::open(&path).unwrap());
    for (u, expected) in uris.iter().zip(before) {
        assert_eq!(call(&s, "GET", u, None).await, expected, "{u}");
    }
}

#[tokio::test]
async fn new_patients() {
    let f = fixture();
    let s = state(&f);
    let id = new_patient(&s, "x1").await;
    assert_eq!(id, "x1");
    let (st, body) = post_json(&s, "/api/patients", json!({"patient_id": "x1", "age": 50.0, "sex": "F", "history_flags": [false, false, false, false]})).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(body["code"], "patient_exists");
    let (st, body) = post_json(&s, "/api/patients", json!({"age": 50.0, "sex": "F", "history_flags": [false, false, false, false]})).await;
    assert_eq!(st, StatusCode::OK);
    assert!(body["patient_id"].as_str().unwrap().starts_with("live-"));
    assert_eq!(body["missing_labs"].as_array().unwrap().len(), 14);
    let (st, _) = post_json(&s, "/api/patients", json!({"age": 50.0, "sex": "X"})).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
}

#[test]
fn writes_to_one_patient_serialize() {
    let f = fixture();
    let s = state(&f);
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(new_patient(&s, "p"));
    let threads: Vec<_> = (0..8)
        .map(|i| {
            let s: Arc<_> = s.clone();
            std::thread::spawn(move || {
                s.add_observation(
                    "p",
                    sepsislab_service::app::NewObservation {
                        variable: "HR".into(),
                        value: 80.0 + i as f64,
                        time: i as f64 * 0.25,
                    },
                )
                .unwrap()
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    let detail = rt.block_on(get_json(&s, "/api/patients/p"));
    assert_eq!(detail["observations"].as_array().unwrap().len(), 8);
    assert_eq!(detail["admitted_hours"].as_f64().unwrap(), 1.75);
    // the cached prediction is the one for the final state
    let n = s.recompute_count();
    rt.block_on(get_json(&s, "/api/patients"));
    assert_eq!(s.recompute_count(), n);
}
