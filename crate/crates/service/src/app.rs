//! Service state and the operations behind each endpoint. Everything here
//! is synchronous; handlers run it on the blocking pool.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::json;

use sepsislab::checkpoint::Checkpoint;
use sepsislab::data::{snapshot_at, Observation, PatientRecord, Sex, StaticInfo, VariableId, Vocabulary};
use sepsislab::data::io::ingest_with;
use sepsislab::predictor::{ModelRegistry, RiskModel};
use sepsislab::recommender::{project_trajectory, recommend, Recommendation, RiskPoint};
use sepsislab::rng::request_seed;
use sepsislab::uncertainty::{decide, predict_uncertain, ImputationModel, PolicyConfig, PolicyDecision, UncertainPrediction};

use crate::error::ServiceError;
use crate::store::{self, CachedPrediction, OrderRow, PatientRow, Store};

/// Below this mean risk a patient is Green.
pub const GREEN_BELOW: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskColor {
    Green,
    Yellow,
    Red,
}

/// Red from `th_s` up, so the color agrees with the sepsis flag except at
/// exactly `th_s`, where the flag's comparison is strict.
pub fn risk_color(p_mean: f64, th_s: f64) -> RiskColor {
    if p_mean >= th_s {
        RiskColor::Red
    } else if p_mean >= GREEN_BELOW {
        RiskColor::Yellow
    } else {
        RiskColor::Green
    }
}

const ADJECTIVES: [&str; 16] = [
    "Amber", "Brisk", "Cedar", "Dusky", "Ember", "Fable", "Gentle", "Hazel", "Ivory", "Jade", "Kindle", "Lunar",
    "Maple", "Nimble", "Opal", "Quiet",
];
const NOUNS: [&str; 16] = [
    "Heron", "Otter", "Falcon", "Badger", "Lynx", "Marten", "Plover", "Wren", "Ibis", "Stoat", "Finch", "Egret",
    "Vole", "Kestrel", "Tern", "Hare",
];

/// Synthetic display name derived from the id; never real PII.
pub fn alias_for(id: &str) -> String {
    // FNV-1a
    let h = id
        .bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3));
    format!(
        "{} {} {:02}",
        ADJECTIVES[(h & 15) as usize],
        NOUNS[((h >> 4) & 15) as usize],
        (h >> 8) % 100
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub patient_id: String,
    pub alias: String,
    pub p_mean: f64,
    pub entropy: f64,
    pub color: RiskColor,
    pub admitted_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotItem {
    pub variable: String,
    pub kind: String,
    pub value: Option<f64>,
    pub age_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationItem {
    pub variable: String,
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientDetail {
    pub patient_id: String,
    pub alias: String,
    pub age: f64,
    pub sex: Sex,
    pub history_flags: Vec<bool>,
    pub admitted_hours: f64,
    pub prediction: UncertainPrediction,
    pub color: RiskColor,
    pub decision: PolicyDecision,
    pub snapshot: Vec<SnapshotItem>,
    pub missing_labs: Vec<String>,
    pub observations: Vec<ObservationItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewPatient {
    #[serde(default)]
    pub patient_id: Option<String>,
    pub age: f64,
    pub sex: Sex,
    #[serde(default)]
    pub history_flags: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewObservation {
    pub variable: String,
    pub value: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationResponse {
    pub patient_id: String,
    pub variable: String,
    pub time: f64,
    pub value: f64,
    /// An earlier value at the same `(variable, time)` was overwritten.
    pub replaced: bool,
    pub entropy_before: f64,
    pub entropy_after: f64,
    pub before: UncertainPrediction,
    pub after: UncertainPrediction,
    pub color: RiskColor,
    pub decision: PolicyDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResponse {
    pub patient_id: String,
    pub now: f64,
    pub seed: u64,
    pub hypothetical: Vec<String>,
    pub history: Vec<RiskPoint>,
    pub projection: Vec<RiskPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterfactual: Option<Vec<RiskPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationItem {
    pub rank: usize,
    pub variable: String,
    pub u_before: f64,
    pub u_after: f64,
    pub reduction: f64,
    /// `100 · reduction / u_before`.
    pub reduction_percent: f64,
    pub standard_error: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResponse {
    pub patient_id: String,
    pub time: f64,
    pub seed: u64,
    pub entropy: f64,
    pub request_labs: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub items: Vec<RecommendationItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewOrder {
    pub patient_id: String,
    pub variables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fulfillment {
    /// Result per ordered variable, in original units.
    pub values: std::collections::BTreeMap<String, f64>,
    /// Defaults to the later of the order time and the patient's clock.
    #[serde(default)]
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderView {
    pub order_id: i64,
    pub patient_id: String,
    pub variables: Vec<String>,
    pub order_time: f64,
    pub fulfilled_time: Option<f64>,
    pub values: Option<Vec<ObservationItem>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FulfillResponse {
    pub order: OrderView,
    pub entropy_before: f64,
    pub entropy_after: f64,
    pub before: UncertainPrediction,
    pub after: UncertainPrediction,
    pub color: RiskColor,
    pub decision: PolicyDecision,
}

/// Shared immutable model state plus the store.
pub struct AppState {
    pub model: Box<dyn RiskModel>,
    pub imputation: ImputationModel,
    pub vocab: Vocabulary,
    pub policy: PolicyConfig,
    store: Mutex<Store>,
    patient_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    recomputes: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn not_found(what: &'static str, id: impl Into<String>) -> ServiceError {
    ServiceError::NotFound { what, id: id.into() }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, ServiceError> {
    serde_json::to_string(v).map_err(|e| ServiceError::Internal(e.to_string()))
}

fn check_time(time: f64) -> Result<(), ServiceError> {
    if !time.is_finite() {
        return Err(ServiceError::InvalidValue(format!("time must be finite, got {time}")));
    }
    if time < 0.0 {
        return Err(ServiceError::Conflict {
            code: "before_admission",
            message: format!("time {time} is earlier than admission (hour 0)"),
            detail: json!({ "time": time }),
        });
    }
    Ok(())
}

impl AppState {
    pub fn new(
        model: Box<dyn RiskModel>,
        imputation: ImputationModel,
        vocab: Vocabulary,
        policy: PolicyConfig,
        store: Store,
    ) -> Result<Self, ServiceError> {
        policy.validate()?;
        sepsislab::uncertainty::engine::check_compatible(model.as_ref(), &imputation, &vocab)?;
        Ok(Self {
            model,
            imputation,
            vocab,
            policy,
            store: Mutex::new(store),
            patient_locks: Mutex::new(HashMap::new()),
            recomputes: AtomicU64::new(0),
        })
    }

    pub fn from_checkpoint(path: &Path, policy: PolicyConfig, store: Store) -> Result<Self, ServiceError> {
        let loaded = Checkpoint::read(path)?.load_self(&ModelRegistry::default())?;
        Self::new(loaded.model, loaded.imputation, loaded.vocabulary, policy, store)
    }

    /// Number of live predictions computed so far.
    pub fn recompute_count(&self) -> u64 {
        self.recomputes.load(Ordering::SeqCst)
    }

    fn patient_lock(&self, id: &str) -> Arc<Mutex<()>> {
        lock(&self.patient_locks).entry(id.to_string()).or_default().clone()
    }

    fn load(&self, id: &str) -> Result<(PatientRow, PatientRecord), ServiceError> {
        let store = lock(&self.store);
        let row = store.patient(id)?.ok_or_else(|| not_found("patient", id))?;
        let record = store.record(&row)?;
        Ok((row, record))
    }

    fn compute(&self, record: &PatientRecord, now: f64) -> Result<UncertainPrediction, ServiceError> {
        self.recomputes.fetch_add(1, Ordering::SeqCst);
        Ok(predict_uncertain(self.model.as_ref(), &self.imputation, &self.vocab, record, now, &self.policy)?)
    }

    /// The cached prediction, recomputed only when stale.
    fn current(&self, row: &PatientRow, record: &PatientRecord) -> Result<UncertainPrediction, ServiceError> {
        if let Some(c) = lock(&self.store).prediction(&row.id)? {
            if c.version == row.version {
                return Ok(c.prediction);
            }
        }
        let prediction = self.compute(record, row.now_hours)?;
        let cached = CachedPrediction { version: row.version, time: row.now_hours, prediction };
        let mut store = lock(&self.store);
        let tx = store.transaction()?;
        // a concurrent write may have moved the patient on; keep its result
        if store::patient(&tx, &row.id)?.map(|r| r.version) == Some(row.version) {
            store::put_prediction(&tx, &row.id, &cached)?;
        }
        tx.commit()?;
        Ok(prediction)
    }

    fn cached_view(
        &self,
        row: &PatientRow,
        key: &str,
        build: impl FnOnce() -> Result<String, ServiceError>,
    ) -> Result<String, ServiceError> {
        if let Some(body) = lock(&self.store).derived(&row.id, key, row.version)? {
            return Ok(body);
        }
        let body = build()?;
        let store = lock(&self.store);
        if store.patient(&row.id)?.map(|r| r.version) == Some(row.version) {
            store.put_derived(&row.id, key, row.version, &body)?;
        }
        Ok(body)
    }

    fn name(&self, v: VariableId) -> String {
        self.vocab.get(v).name.clone()
    }

    pub fn list_patients(&self) -> Result<Vec<PatientSummary>, ServiceError> {
        let ids = lock(&self.store).patient_ids()?;
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let (row, record) = self.load(&id)?;
            let p = self.current(&row, &record)?;
            out.push(PatientSummary {
                alias: row.alias.clone(),
                patient_id: row.id,
                p_mean: p.p_mean,
                entropy: p.entropy,
                color: risk_color(p.p_mean, self.policy.th_s),
                admitted_hours: row.now_hours,
            });
        }
        out.sort_by(|a, b| b.p_mean.total_cmp(&a.p_mean).then_with(|| a.patient_id.cmp(&b.patient_id)));
        Ok(out)
    }

    pub fn patient_detail(&self, id: &str) -> Result<PatientDetail, ServiceError> {
        let (row, record) = self.load(id)?;
        let prediction = self.current(&row, &record)?;
        Ok(self.detail(row, &record, prediction))
    }

    fn detail(&self, row: PatientRow, record: &PatientRecord, prediction: UncertainPrediction) -> PatientDetail {
        let snap = snapshot_at(record, &self.vocab, row.now_hours);
        let snapshot = self
            .vocab
            .specs()
            .iter()
            .map(|s| {
                let e = snap.entry(s.id);
                SnapshotItem {
                    variable: s.name.clone(),
                    kind: format!("{:?}", s.kind).to_lowercase(),
                    value: e.map(|e| e.value),
                    age_hours: e.map(|e| e.age),
                }
            })
            .collect();
        let missing_labs = snap
            .missing()
            .into_iter()
            .filter(|&v| self.vocab.is_lab(v))
            .map(|v| self.name(v))
            .collect();
        let observations = record
            .observations()
            .iter()
            .map(|o| ObservationItem { variable: self.name(o.variable), time: o.time, value: o.value })
            .collect();
        PatientDetail {
            patient_id: row.id,
            alias: row.alias,
            age: row.static_info.age,
            sex: row.static_info.sex,
            history_flags: row.static_info.history_flags,
            admitted_hours: row.now_hours,
            color: risk_color(prediction.p_mean, self.policy.th_s),
            decision: decide(&prediction, &self.policy),
            prediction,
            snapshot,
            missing_labs,
            observations,
        }
    }

    pub fn create_patient(&self, req: NewPatient) -> Result<PatientDetail, ServiceError> {
        if !req.age.is_finite() || req.age < 0.0 {
            return Err(ServiceError::InvalidValue(format!("age must be a non-negative number, got {}", req.age)));
        }
        let id = match req.patient_id {
            Some(id) if id.trim().is_empty() => return Err(ServiceError::InvalidValue("patient_id is empty".into())),
            Some(id) => id,
            None => {
                let store = lock(&self.store);
                let mut n = store.count_patients()? + 1;
                while store.patient(&format!("live-{n:05}"))?.is_some() {
                    n += 1;
                }
                format!("live-{n:05}")
            }
        };
        let patient_lock = self.patient_lock(&id);
        let _guard = lock(&patient_lock);
        let static_info = StaticInfo { age: req.age, sex: req.sex, history_flags: req.history_flags };
        let record = PatientRecord::new(id.clone(), static_info.clone(), vec![], None)?;
        let prediction = self.compute(&record, 0.0).map_err(|e| match e {
            ServiceError::Core(sepsislab::Error::Shape(m)) => ServiceError::InvalidValue(m),
            e => e,
        })?;
        let row = PatientRow { alias: alias_for(&id), id: id.clone(), static_info, now_hours: 0.0, version: 0 };
        let mut store = lock(&self.store);
        let tx = store.transaction()?;
        if !store::insert_patient(&tx, &row)? {
            return Err(ServiceError::Conflict {
                code: "patient_exists",
                message: format!("patient `{id}` already exists"),
                detail: json!({ "patient_id": id }),
            });
        }
        store::put_prediction(&tx, &id, &CachedPrediction { version: 0, time: 0.0, prediction })?;
        tx.commit()?;
        drop(store);
        Ok(self.detail(row, &record, prediction))
    }

    pub fn trajectory(&self, id: &str, hypothetical: &[String]) -> Result<String, ServiceError> {
        let (row, record) = self.load(id)?;
        let vars = hypothetical
            .iter()
            .map(|n| self.vocab.resolve(n))
            .collect::<Result<Vec<_>, _>>()?;
        let key = format!("trajectory?{}", hypothetical.join(","));
        self.cached_view(&row, &key, || {
            let t = project_trajectory(
                self.model.as_ref(),
                &self.imputation,
                &self.vocab,
                &record,
                row.now_hours,
                &self.policy,
                &vars,
            )?;
            to_json(&TrajectoryResponse {
                patient_id: row.id.clone(),
                now: row.now_hours,
                seed: t.seed,
                hypothetical: hypothetical.to_vec(),
                history: t.history,
                projection: t.projection,
                counterfactual: t.counterfactual,
            })
        })
    }

    /// The full ranking at the patient's current time.
    pub fn ranking(&self, id: &str) -> Result<(PatientRow, Recommendation), ServiceError> {
        let (row, record) = self.load(id)?;
        let body = self.cached_view(&row, "recommendations", || {
            to_json(&recommend(
                self.model.as_ref(),
                &self.imputation,
                &self.vocab,
                &record,
                row.now_hours,
                &self.policy,
            )?)
        })?;
        let rec = serde_json::from_str(&body).map_err(|e| ServiceError::Internal(e.to_string()))?;
        Ok((row, rec))
    }

    pub fn recommendations(&self, id: &str, top: Option<usize>) -> Result<RecommendationResponse, ServiceError> {
        let (row, rec) = self.ranking(id)?;
        let record = lock(&self.store).record(&row)?;
        let current = self.current(&row, &record)?;
        let top = top.unwrap_or(self.policy.top_k);
        let items = rec
            .ranked
            .iter()
            .take(top)
            .enumerate()
            .map(|(i, e)| RecommendationItem {
                rank: i + 1,
                variable: self.name(e.variables[0]),
                u_before: e.u_before,
                u_after: e.u_after,
                reduction: e.reduction,
                reduction_percent: 100.0 * e.reduction_fraction(),
                standard_error: e.standard_error,
                k: e.k,
            })
            .collect();
        Ok(RecommendationResponse {
            patient_id: row.id.clone(),
            time: row.now_hours,
            seed: request_seed(self.policy.seed, &row.id, row.now_hours),
            entropy: current.entropy,
            request_labs: decide(&current, &self.policy).request_labs,
            reason: rec.ranked.is_empty().then(|| "fully_observed".to_string()),
            items,
        })
    }

    /// Writes `observations`, moves the clock to cover them and stores the
    /// recomputed prediction, all in one transaction. Caller holds the
    /// patient lock.
    fn apply(
        &self,
        row: &PatientRow,
        mut record: PatientRecord,
        observations: &[Observation],
        order: Option<(i64, f64)>,
    ) -> Result<(Vec<bool>, UncertainPrediction, UncertainPrediction), ServiceError> {
        let before = self.current(row, &record)?;
        let now = observations.iter().fold(row.now_hours, |t, o| t.max(o.time));
        for o in observations {
            record.retain_observations(|x| !(x.variable == o.variable && x.time == o.time));
            record.push_observation(*o)?;
        }
        let after = self.compute(&record, now)?;
        let mut store = lock(&self.store);
        let tx = store.transaction()?;
        let replaced = observations
            .iter()
            .map(|o| store::upsert_observation(&tx, &row.id, o))
            .collect::<Result<Vec<_>, _>>()?;
        let version = store::touch_patient(&tx, &row.id, now)?;
        store::put_prediction(&tx, &row.id, &CachedPrediction { version, time: now, prediction: after })?;
        if let Some((order_id, time)) = order {
            let values: Vec<_> = observations.iter().map(|o| (o.variable, o.value)).collect();
            store::fulfill_order(&tx, order_id, time, &values)?;
        }
        tx.commit()?;
        Ok((replaced, before, after))
    }

    pub fn add_observation(&self, id: &str, req: NewObservation) -> Result<ObservationResponse, ServiceError> {
        let variable = self.vocab.resolve(&req.variable)?;
        if !req.value.is_finite() {
            return Err(ServiceError::InvalidValue(format!("value must be finite, got {}", req.value)));
        }
        check_time(req.time)?;
        let patient_lock = self.patient_lock(id);
        let _guard = lock(&patient_lock);
        let (row, record) = self.load(id)?;
        let obs = Observation { variable, value: req.value, time: req.time };
        let (replaced, before, after) = self.apply(&row, record, &[obs], None)?;
        Ok(ObservationResponse {
            patient_id: row.id,
            variable: req.variable,
            time: req.time,
            value: req.value,
            replaced: replaced[0],
            entropy_before: before.entropy,
            entropy_after: after.entropy,
            before,
            after,
            color: risk_color(after.p_mean, self.policy.th_s),
            decision: decide(&after, &self.policy),
        })
    }

    fn order_view(&self, o: &OrderRow) -> OrderView {
        OrderView {
            order_id: o.id,
            patient_id: o.patient_id.clone(),
            variables: o.variables.iter().map(|&v| self.name(v)).collect(),
            order_time: o.order_time,
            fulfilled_time: o.fulfilled_time,
            values: o.fulfilled_values.as_ref().map(|vals| {
                vals.iter()
                    .map(|&(v, value)| ObservationItem {
                        variable: self.name(v),
                        time: o.fulfilled_time.unwrap_or(o.order_time),
                        value,
                    })
                    .collect()
            }),
        }
    }

    pub fn get_order(&self, order_id: i64) -> Result<OrderView, ServiceError> {
        let o = lock(&self.store).order(order_id)?.ok_or_else(|| not_found("order", order_id.to_string()))?;
        Ok(self.order_view(&o))
    }

    pub fn create_order(&self, req: NewOrder) -> Result<OrderView, ServiceError> {
        if req.variables.is_empty() {
            return Err(ServiceError::InvalidValue("an order needs at least one variable".into()));
        }
        let mut vars = Vec::with_capacity(req.variables.len());
        for name in &req.variables {
            let v = self.vocab.resolve(name)?;
            if vars.contains(&v) {
                return Err(ServiceError::InvalidValue(format!("variable {name} ordered twice")));
            }
            vars.push(v);
        }
        let patient_lock = self.patient_lock(&req.patient_id);
        let _guard = lock(&patient_lock);
        let mut store = lock(&self.store);
        let row = store.patient(&req.patient_id)?.ok_or_else(|| not_found("patient", &req.patient_id))?;
        let tx = store.transaction()?;
        let id = store::insert_order(&tx, &row.id, &vars, row.now_hours)?;
        tx.commit()?;
        let o = store.order(id)?.ok_or_else(|| ServiceError::Internal("order vanished".into()))?;
        drop(store);
        Ok(self.order_view(&o))
    }

    pub fn fulfill_order(&self, order_id: i64, req: Fulfillment) -> Result<FulfillResponse, ServiceError> {
        let patient_id = lock(&self.store)
            .order(order_id)?
            .ok_or_else(|| not_found("order", order_id.to_string()))?
            .patient_id;
        let patient_lock = self.patient_lock(&patient_id);
        let _guard = lock(&patient_lock);
        // re-read under the patient lock so two fulfillments cannot both pass
        let order = lock(&self.store)
            .order(order_id)?
            .ok_or_else(|| not_found("order", order_id.to_string()))?;
        if let Some(t) = order.fulfilled_time {
            return Err(ServiceError::Conflict {
                code: "already_fulfilled",
                message: format!("order {order_id} was already fulfilled at hour {t}"),
                detail: json!({ "order_id": order_id, "fulfilled_time": t }),
            });
        }
        if req.values.is_empty() {
            return Err(ServiceError::InvalidValue("no result values given".into()));
        }
        let (row, record) = self.load(&patient_id)?;
        let time = req.time.unwrap_or(order.order_time.max(row.now_hours));
        check_time(time)?;
        if time < order.order_time {
            return Err(ServiceError::Conflict {
                code: "before_order",
                message: format!("fulfillment time {time} precedes order time {}", order.order_time),
                detail: json!({ "order_time": order.order_time, "time": time }),
            });
        }
        // results in the order's variable order
        let mut obs = Vec::with_capacity(req.values.len());
        for (name, &value) in &req.values {
            let v = self.vocab.resolve(name)?;
            if !order.variables.contains(&v) {
                return Err(ServiceError::InvalidValue(format!("{name} is not part of order {order_id}")));
            }
            if !value.is_finite() {
                return Err(ServiceError::InvalidValue(format!("value of {name} must be finite, got {value}")));
            }
            obs.push(Observation { variable: v, value, time });
        }
        obs.sort_by_key(|o| order.variables.iter().position(|&v| v == o.variable));
        let (_, before, after) = self.apply(&row, record, &obs, Some((order_id, time)))?;
        let order = lock(&self.store)
            .order(order_id)?
            .ok_or_else(|| ServiceError::Internal("order vanished".into()))?;
        Ok(FulfillResponse {
            order: self.order_view(&order),
            entropy_before: before.entropy,
            entropy_after: after.entropy,
            before,
            after,
            color: risk_color(after.p_mean, self.policy.th_s),
            decision: decide(&after, &self.policy),
        })
    }

    /// Imports a cohort into an empty store, cut at each patient's label
    /// time. Returns how many patients were added.
    pub fn seed_from_cohort(&self, dir: &Path, limit: Option<usize>) -> Result<usize, ServiceError> {
        if lock(&self.store).count_patients()? > 0 {
            return Ok(0);
        }
        let records = ingest_with(dir, &self.vocab)?;
        let n = limit.unwrap_or(records.len()).min(records.len());
        for mut record in records.into_iter().take(n) {
            let now = match record.label {
                Some(l) => l.time,
                None => record.last_time().unwrap_or(0.0),
            };
            record.retain_observations(|o| o.time <= now);
            let prediction = self.compute(&record, now)?;
            let row = PatientRow {
                id: record.patient_id.clone(),
                alias: alias_for(&record.patient_id),
                static_info: record.static_info.clone(),
                now_hours: now,
                version: 0,
            };
            let mut store = lock(&self.store);
            let tx = store.transaction()?;
            store::insert_patient(&tx, &row)?;
            for o in record.observations() {
                store::upsert_observation(&tx, &row.id, o)?;
            }
            store::put_prediction(&tx, &row.id, &CachedPrediction { version: 0, time: now, prediction })?;
            tx.commit()?;
        }
        log::info!("seeded {n} patients from {}", dir.display());
        Ok(n)
    }
}
