//! Past and projected risk, optionally under hypothesized lab results.
//!
//! The projection re-evaluates the model at future query times with no new
//! data: observations age, stale ones drop out of the snapshot and are
//! imputed instead.

use serde::{Deserialize, Serialize};

use crate::data::{PatientRecord, VariableId, Vocabulary};
use crate::error::{Error, Result};
use crate::predictor::model::RiskModel;
use crate::recommender::counterfactual::{check_missing, draw_hypotheses, evaluate_draws, summarize};
use crate::rng::request_seed;
use crate::uncertainty::engine::{check_compatible, Scenario, UncertainPrediction};
use crate::uncertainty::imputation::ImputationModel;
use crate::uncertainty::policy::PolicyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub time: f64,
    pub p_mean: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub entropy: f64,
}

impl RiskPoint {
    pub fn from_prediction(time: f64, u: &UncertainPrediction) -> Self {
        Self {
            time,
            p_mean: u.p_mean,
            band_low: u.band.0,
            band_high: u.band.1,
            entropy: u.entropy,
        }
    }

    pub fn band_width(&self) -> f64 {
        self.band_high - self.band_low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTrajectory {
    /// Hourly points before `now`, then `now` itself.
    pub history: Vec<RiskPoint>,
    /// Hours `now + 1 ..= now + horizon`.
    pub projection: Vec<RiskPoint>,
    /// Points at `now` and each projected time with the hypothesized
    /// variables observed at `now`; entropy is the expected entropy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterfactual: Option<Vec<RiskPoint>>,
    pub hypothetical: Vec<VariableId>,
    pub seed: u64,
}

/// Query times of the history part: whole hours before `now`, then `now`.
pub fn history_times(now: f64) -> Vec<f64> {
    let mut times: Vec<f64> = (0..).map(|h| h as f64).take_while(|&h| h < now).collect();
    times.push(now);
    times
}

pub fn projection_times(now: f64, horizon_hours: f64) -> Vec<f64> {
    (1..=horizon_hours.floor() as usize).map(|d| now + d as f64).collect()
}

/// Predicted risk at `t` with the seed every caller uses for that time.
pub fn point_at(
    model: &dyn RiskModel,
    imputation: &ImputationModel,
    vocab: &Vocabulary,
    record: &PatientRecord,
    t: f64,
    config: &PolicyConfig,
) -> Result<RiskPoint> {
    let scenario = Scenario::new(model, imputation, vocab, record, t)?;
    let u = scenario.predict(config.mcs_samples, request_seed(config.seed, &record.patient_id, t));
    Ok(RiskPoint::from_prediction(t, &u))
}

/// Counterfactual points at `now` and each projected time.
pub fn counterfactual_points(
    model: &dyn RiskModel,
    imputation: &ImputationModel,
    vocab: &Vocabulary,
    record: &PatientRecord,
    now: f64,
    set: &[VariableId],
    config: &PolicyConfig,
) -> Result<Vec<RiskPoint>> {
    let at_now = Scenario::new(model, imputation, vocab, record, now)?;
    check_missing(&at_now, vocab, set)?;
    let now_seed = request_seed(config.seed, &record.patient_id, now);
    let draws = draw_hypotheses(&at_now, set, config.counterfactual_samples, now_seed);
    let mut times = vec![now];
    times.extend(projection_times(now, config.horizon_hours));
    times
        .into_iter()
        .map(|t| {
            let scenario = if t == now {
                None
            } else {
                Some(Scenario::new(model, imputation, vocab, record, t)?)
            };
            let s = scenario.as_ref().unwrap_or(&at_now);
            let seed = request_seed(config.seed, &record.patient_id, t);
            let preds = evaluate_draws(s, &draws, t - now, config.mcs_samples, seed);
            let est = summarize(set.to_vec(), None, &preds);
            Ok(RiskPoint {
                time: t,
                p_mean: est.mean_p,
                band_low: est.mean_band.0,
                band_high: est.mean_band.1,
                entropy: est.u_after,
            })
        })
        .collect()
}

pub fn project_trajectory(
    model: &dyn RiskModel,
    imputation: &ImputationModel,
    vocab: &Vocabulary,
    record: &PatientRecord,
    now: f64,
    config: &PolicyConfig,
    hypothetical: &[VariableId],
) -> Result<RiskTrajectory> {
    config.validate()?;
    if !(now >= 0.0) {
        return Err(Error::InvalidConfig(format!("query time must be non-negative, got {now}")));
    }
    check_compatible(model, imputation, vocab)?;
    let point = |t| point_at(model, imputation, vocab, record, t, config);
    let history = history_times(now).into_iter().map(point).collect::<Result<_>>()?;
    let projection = projection_times(now, config.horizon_hours)
        .into_iter()
        .map(point)
        .collect::<Result<_>>()?;
    let counterfactual = if hypothetical.is_empty() {
        None
    } else {
        Some(counterfactual_points(model, imputation, vocab, record, now, hypothetical, config)?)
    };
    Ok(RiskTrajectory {
        history,
        projection,
        counterfactual,
        hypothetical: hypothetical.to_vec(),
        seed: request_seed(config.seed, &record.patient_id, now),
    })
}
