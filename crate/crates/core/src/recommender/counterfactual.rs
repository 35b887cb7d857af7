//! Expected entropy after observing a set of currently missing variables.
//!
//! For each of `K` joint draws of the set from the imputation conditional,
//! the remaining missing variables are re-sampled `M` times given the
//! observed values plus the drawn ones, and the entropy of the mean risk is
//! recorded. Draw `k` gets its own inner random streams, shared by every
//! candidate set and by a baseline run without hypotheses, so each
//! per-draw reduction is a paired difference and candidates are compared
//! on common random numbers.

use serde::{Deserialize, Serialize};

use crate::data::{PatientRecord, VariableId, Vocabulary};
use crate::error::{Error, Result};
use crate::predictor::model::RiskModel;
use crate::rng::{derive_seed, request_seed, rng_for};
use crate::uncertainty::engine::{Hypothesis, Scenario, UncertainPrediction};
use crate::uncertainty::imputation::ImputationModel;
use crate::uncertainty::policy::PolicyConfig;

/// Stream keys separating hypothetical draws from the inner imputation draws.
const OUTER_KEY: u64 = 0xc0f7;
const INNER_KEY: u64 = 0x1a7e;

/// Seed of the inner imputation draws paired with hypothesis draw `k`.
pub fn inner_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, &[INNER_KEY, k as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualEstimate {
    pub variables: Vec<VariableId>,
    /// Entropy without the hypotheses, averaged over the same inner
    /// streams as `u_after`.
    pub u_before: f64,
    pub u_after: f64,
    pub reduction: f64,
    /// Standard error of `reduction` over the `k` paired draws.
    pub standard_error: f64,
    pub k: usize,
    /// Mean over draws of the per-draw prediction summary.
    pub mean_p: f64,
    pub mean_band: (f64, f64),
    /// Hypothesized values in original units, one row per draw; only kept
    /// on request.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampled_values: Option<Vec<Vec<f64>>>,
}

impl CounterfactualEstimate {
    /// Reduction relative to the current entropy; 0 when that is 0.
    pub fn reduction_fraction(&self) -> f64 {
        if self.u_before > 0.0 {
            self.reduction / self.u_before
        } else {
            0.0
        }
    }
}

/// Draws of a variable set, in standardized space, shared across query times.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisDraws {
    pub variables: Vec<VariableId>,
    /// `k` rows, one value per variable.
    pub values: Vec<Vec<f64>>,
}

pub fn check_missing(scenario: &Scenario<'_>, vocab: &Vocabulary, set: &[VariableId]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidConfig("variable set must not be empty".into()));
    }
    for (i, &v) in set.iter().enumerate() {
        if v >= vocab.len() {
            return Err(Error::Shape(format!("variable id {v} outside vocabulary")));
        }
        if scenario.snapshot.is_observed(v) {
            return Err(Error::AlreadyObserved(vocab.get(v).name.clone()));
        }
        if set[..i].contains(&v) {
            return Err(Error::InvalidConfig(format!("variable {} listed twice", vocab.get(v).name)));
        }
    }
    Ok(())
}

/// `k` joint draws of `set` given what `scenario` has observed.
pub fn draw_hypotheses(scenario: &Scenario<'_>, set: &[VariableId], k: usize, seed: u64) -> HypothesisDraws {
    let cond = scenario.conditioner(&[]);
    let mean = cond.mean(&scenario.observed_values(&cond, &[]));
    let pos: Vec<usize> = set
        .iter()
        .map(|v| cond.missing.iter().position(|m| m == v).expect("set is missing"))
        .collect();
    let values = (0..k.max(1))
        .map(|i| {
            let draw = cond.sample_around(&mean, &mut rng_for(seed, &[OUTER_KEY, i as u64]));
            pos.iter().map(|&p| draw[p]).collect()
        })
        .collect();
    HypothesisDraws {
        variables: set.to_vec(),
        values,
    }
}

/// Per-draw predictions of `scenario` with the hypotheses observed `age`
/// hours before its query time.
pub fn evaluate_draws(
    scenario: &Scenario<'_>,
    draws: &HypothesisDraws,
    age: f64,
    m: usize,
    seed: u64,
) -> Vec<UncertainPrediction> {
    let cond = scenario.conditioner(&draws.variables);
    let mut hyps: Vec<Hypothesis> = draws
        .variables
        .iter()
        .map(|&variable| Hypothesis { variable, value: 0.0, age })
        .collect();
    draws
        .values
        .iter()
        .enumerate()
        .map(|(k, row)| {
            for (h, &x) in hyps.iter_mut().zip(row) {
                h.value = x;
            }
            scenario.predict_given(&cond, &hyps, m, inner_seed(seed, k))
        })
        .collect()
}

/// The `k` predictions without hypotheses that pair with [`evaluate_draws`].
pub fn baseline_draws(scenario: &Scenario<'_>, k: usize, m: usize, seed: u64) -> Vec<UncertainPrediction> {
    let cond = scenario.conditioner(&[]);
    (0..k.max(1))
        .map(|i| scenario.predict_given(&cond, &[], m, inner_seed(seed, i)))
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs.iter().copied());
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Aggregates per-draw predictions. With `baseline` (paired draw by draw)
/// the reduction and its standard error are paired differences; without
/// it `u_before` is NaN and the standard error is that of `u_after`.
pub fn summarize(
    variables: Vec<VariableId>,
    baseline: Option<&[UncertainPrediction]>,
    preds: &[UncertainPrediction],
) -> CounterfactualEstimate {
    let k = preds.len();
    let u: Vec<f64> = preds.iter().map(|p| p.entropy).collect();
    let u_after = mean(u.iter().copied());
    let (u_before, reduction, se) = match baseline {
        Some(base) => {
            debug_assert_eq!(base.len(), k);
            let d: Vec<f64> = base.iter().zip(&u).map(|(b, a)| b.entropy - a).collect();
            (mean(base.iter().map(|b| b.entropy)), mean(d.iter().copied()), standard_error(&d))
        }
        None => (f64::NAN, f64::NAN, standard_error(&u)),
    };
    CounterfactualEstimate {
        variables,
        u_before,
        u_after,
        reduction,
        standard_error: se,
        k,
        mean_p: mean(preds.iter().map(|p| p.p_mean)),
        mean_band: (mean(preds.iter().map(|p| p.band.0)), mean(preds.iter().map(|p| p.band.1))),
        sampled_values: None,
    }
}

/// Counterfactual estimate on a prepared scenario with explicit sample
/// counts and seed.
pub fn estimate_on(
    scenario: &Scenario<'_>,
    vocab: &Vocabulary,
    set: &[VariableId],
    k: usize,
    m: usize,
    seed: u64,
    retain_samples: bool,
) -> Result<CounterfactualEstimate> {
    check_missing(scenario, vocab, set)?;
    let baseline = baseline_draws(scenario, k, m, seed);
    let draws = draw_hypotheses(scenario, set, k, seed);
    let preds = evaluate_draws(scenario, &draws, 0.0, m, seed);
    let mut est = summarize(set.to_vec(), Some(&baseline), &preds);
    if retain_samples {
        est.sampled_values = Some(
            draws
                .values
                .iter()
                .map(|row| {
                    set.iter()
                        .zip(row)
                        .map(|(&v, &z)| vocab.get(v).destandardize(z))
                        .collect()
                })
                .collect(),
        );
    }
    Ok(est)
}

/// Expected entropy at `t` if every variable in `set` were measured now.
pub fn estimate_reduction(
    model: &dyn RiskModel,
    imputation: &ImputationModel,
    vocab: &Vocabulary,
    record: &PatientRecord,
    t: f64,
    set: &[VariableId],
    config: &PolicyConfig,
) -> Result<CounterfactualEstimate> {
    config.validate()?;
    let scenario = Scenario::new(model, imputation, vocab, record, t)?;
    estimate_on(
        &scenario,
        vocab,
        set,
        config.counterfactual_samples,
        config.mcs_samples,
        request_seed(config.seed, &record.patient_id, t),
        false,
    )
}
