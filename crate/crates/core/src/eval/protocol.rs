//! Evaluation conditions as interchangeable acquisition strategies.
//!
//! Every patient is scored at its label time. Lab observations up to then
//! are the withheld ground truth: `masked` drops them all, `full` keeps them
//! all, and `recommended` starts masked and reveals, one at a time, the
//! latest withheld value of the recommender's top-ranked lab while the
//! entropy stays above `th_e` and the patient's budget allows.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Observation, PatientRecord, VariableId, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::auc::compute_auc;
use crate::predictor::model::RiskModel;
use crate::recommender::rank::recommend_among;
use crate::rng::request_seed;
use crate::uncertainty::engine::{check_compatible, Scenario, UncertainPrediction};
use crate::uncertainty::imputation::ImputationModel;
use crate::uncertainty::policy::PolicyConfig;

pub struct EvalContext<'a> {
    pub model: &'a dyn RiskModel,
    pub imputation: &'a ImputationModel,
    pub vocab: &'a Vocabulary,
    pub policy: PolicyConfig,
    /// Cap on revealed labs as a fraction of each patient's withheld labs.
    pub budget: f64,
}

impl EvalContext<'_> {
    fn seed(&self, patient: &EvalPatient) -> u64 {
        request_seed(self.policy.seed, &patient.full.patient_id, patient.t)
    }

    pub fn predict(&self, record: &PatientRecord, t: f64, seed: u64) -> Result<UncertainPrediction> {
        let s = Scenario::new(self.model, self.imputation, self.vocab, record, t)?;
        Ok(s.predict(self.policy.mcs_samples, seed))
    }
}

/// One labelled patient split into what is always visible and what is
/// withheld.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPatient {
    pub full: PatientRecord,
    pub masked: PatientRecord,
    /// Lab observations at or before `t`, in record order.
    pub withheld: Vec<Observation>,
    pub t: f64,
    pub label: bool,
}

impl EvalPatient {
    pub fn new(record: &PatientRecord, vocab: &Vocabulary) -> Result<Self> {
        let label = record
            .label
            .ok_or_else(|| Error::InvalidConfig(format!("record {} has no label", record.patient_id)))?;
        let t = label.time;
        let withheld: Vec<Observation> = record
            .observations()
            .iter()
            .filter(|o| o.time <= t && vocab.is_lab(o.variable))
            .copied()
            .collect();
        let mut masked = record.clone();
        masked.retain_observations(|o| !(o.time <= t && vocab.is_lab(o.variable)));
        Ok(Self {
            full: record.clone(),
            masked,
            withheld,
            t,
            label: label.positive,
        })
    }

    /// Latest withheld observation of `v` still fresh at `t`.
    pub fn latest_fresh(&self, v: VariableId, vocab: &Vocabulary) -> Option<Observation> {
        self.withheld
            .iter()
            .rev()
            .find(|o| o.variable == v)
            .filter(|o| self.t - o.time <= vocab.get(v).staleness_hours)
            .copied()
    }

    /// Number of reveals allowed under `budget`.
    pub fn allowance(&self, budget: f64) -> usize {
        (budget * self.withheld.len() as f64 + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub variable: VariableId,
    pub time: f64,
    pub value: f64,
    pub entropy_before: f64,
    pub entropy_after: f64,
    pub p_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientOutcome {
    pub patient_id: String,
    pub label: bool,
    pub p_mean: f64,
    pub entropy: f64,
    pub n_withheld: usize,
    pub acquisitions: Vec<Acquisition>,
    /// The loop stopped on the budget while entropy was still above `th_e`.
    pub truncated: bool,
}

pub trait AcquisitionStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, ctx: &EvalContext<'_>, patient: &EvalPatient) -> Result<PatientOutcome>;
}

fn outcome(patient: &EvalPatient, u: &UncertainPrediction) -> PatientOutcome {
    PatientOutcome {
        patient_id: patient.full.patient_id.clone(),
        label: patient.label,
        p_mean: u.p_mean,
        entropy: u.entropy,
        n_withheld: patient.withheld.len(),
        acquisitions: Vec::new(),
        truncated: false,
    }
}

pub struct Masked;
pub struct Full;
pub struct Recommended;

impl AcquisitionStrategy for Masked {
    fn name(&self) -> &'static str {
        "masked"
    }

    fn evaluate(&self, ctx: &EvalContext<'_>, patient: &EvalPatient) -> Result<PatientOutcome> {
        let u = ctx.predict(&patient.masked, patient.t, ctx.seed(patient))?;
        Ok(outcome(patient, &u))
    }
}

impl AcquisitionStrategy for Full {
    fn name(&self) -> &'static str {
        "full"
    }

    fn evaluate(&self, ctx: &EvalContext<'_>, patient: &EvalPatient) -> Result<PatientOutcome> {
        let u = ctx.predict(&patient.full, patient.t, ctx.seed(patient))?;
        Ok(outcome(patient, &u))
    }
}

impl AcquisitionStrategy for Recommended {
    fn name(&self) -> &'static str {
        "recommended"
    }

    fn evaluate(&self, ctx: &EvalContext<'_>, patient: &EvalPatient) -> Result<PatientOutcome> {
        let seed = ctx.seed(patient);
        let allowance = patient.allowance(ctx.budget);
        let mut record = patient.masked.clone();
        let mut acquisitions = Vec::new();
        let mut scenario = Scenario::new(ctx.model, ctx.imputation, ctx.vocab, &record, patient.t)?;
        let mut u = scenario.predict(ctx.policy.mcs_samples, seed);
        let mut truncated = false;
        while u.entropy > ctx.policy.th_e {
            if acquisitions.len() >= allowance {
                truncated = true;
                break;
            }
            let candidates: Vec<VariableId> = scenario
                .missing()
                .into_iter()
                .filter(|&v| patient.latest_fresh(v, ctx.vocab).is_some())
                .collect();
            if candidates.is_empty() {
                break;
            }
            let rec = recommend_among(
                &scenario,
                &candidates,
                ctx.policy.counterfactual_samples,
                ctx.policy.mcs_samples,
                seed,
                ctx.policy.top_k,
            );
            let v = rec.best().expect("non-empty candidates");
            let obs = patient.latest_fresh(v, ctx.vocab).expect("candidate has ground truth");
            record.push_observation(obs)?;
            scenario = Scenario::new(ctx.model, ctx.imputation, ctx.vocab, &record, patient.t)?;
            let next = scenario.predict(ctx.policy.mcs_samples, seed);
            acquisitions.push(Acquisition {
                variable: v,
                time: obs.time,
                value: obs.value,
                entropy_before: u.entropy,
                entropy_after: next.entropy,
                p_after: next.p_mean,
            });
            u = next;
        }
        let mut out = outcome(patient, &u);
        out.acquisitions = acquisitions;
        out.truncated = truncated;
        Ok(out)
    }
}

/// Strategies keyed by condition name.
pub struct ConditionRegistry {
    strategies: BTreeMap<&'static str, Box<dyn AcquisitionStrategy>>,
}

impl Default for ConditionRegistry {
    fn default() -> Self {
        let mut r = Self {
            strategies: BTreeMap::new(),
        };
        r.register(Box::new(Masked));
        r.register(Box::new(Recommended));
        r.register(Box::new(Full));
        r
    }
}

impl ConditionRegistry {
    pub fn register(&mut self, s: Box<dyn AcquisitionStrategy>) {
        self.strategies.insert(s.name(), s);
    }

    pub fn names(&self) -> Vec<String> {
        self.strategies.keys().map(|k| k.to_string()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn AcquisitionStrategy> {
        self.strategies
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "condition".into(),
                name: name.into(),
                available: self.names(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model: String,
    pub condition: String,
    pub auc: f64,
    /// Revealed over withheld lab observations, pooled over patients.
    pub acquired_fraction: f64,
    pub n_patients: usize,
    pub seed: u64,
    pub budget: f64,
    pub log: Vec<PatientOutcome>,
    pub runtime_seconds: f64,
}

/// Runs one condition over labelled `records`; outcomes ordered by patient id.
pub fn run_condition(
    strategy: &dyn AcquisitionStrategy,
    ctx: &EvalContext<'_>,
    records: &[PatientRecord],
) -> Result<ExperimentReport> {
    ctx.policy.validate()?;
    if !(0.0..=1.0).contains(&ctx.budget) {
        return Err(Error::InvalidConfig(format!("budget must lie in [0, 1], got {}", ctx.budget)));
    }
    check_compatible(ctx.model, ctx.imputation, ctx.vocab)?;
    let start = Instant::now();
    let mut patients: Vec<EvalPatient> = records
        .iter()
        .map(|r| EvalPatient::new(r, ctx.vocab))
        .collect::<Result<_>>()?;
    patients.sort_by(|a, b| a.full.patient_id.cmp(&b.full.patient_id));
    let log: Vec<PatientOutcome> = patients
        .iter()
        .map(|p| strategy.evaluate(ctx, p))
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = log.iter().map(|o| o.p_mean).collect();
    let labels: Vec<bool> = log.iter().map(|o| o.label).collect();
    let auc = compute_auc(&scores, &labels)?;
    let withheld: usize = log.iter().map(|o| o.n_withheld).sum();
    let revealed: usize = log.iter().map(|o| o.acquisitions.len()).sum();
    Ok(ExperimentReport {
        model: ctx.model.kind().into(),
        condition: strategy.name().into(),
        auc,
        acquired_fraction: if withheld == 0 { 0.0 } else { revealed as f64 / withheld as f64 },
        n_patients: log.len(),
        seed: ctx.policy.seed,
        budget: ctx.budget,
        log,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}
