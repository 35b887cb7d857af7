use serde::{Deserialize, Serialize};

use crate::data::{PatientRecord, VariableId, Vocabulary};
use crate::error::Result;
use crate::predictor::model::RiskModel;
use crate::recommender::counterfactual::{
    baseline_draws, draw_hypotheses, evaluate_draws, summarize, CounterfactualEstimate,
};
use crate::rng::request_seed;
use crate::uncertainty::engine::Scenario;
use crate::uncertainty::imputation::ImputationModel;
use crate::uncertainty::policy::PolicyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// Every candidate, largest reduction first, ties by variable id.
    pub ranked: Vec<CounterfactualEstimate>,
    pub top_k: usize,
}

impl Recommendation {
    pub fn top(&self) -> &[CounterfactualEstimate] {
        &self.ranked[..self.top_k.min(self.ranked.len())]
    }

    pub fn best(&self) -> Option<VariableId> {
        self.ranked.first().map(|e| e.variables[0])
    }
}

/// Sorts by reduction descending, then variable id ascending.
pub fn rank(estimates: &mut [CounterfactualEstimate]) {
    estimates.sort_by(|a, b| {
        b.reduction
            .total_cmp(&a.reduction)
            .then_with(|| a.variables.cmp(&b.variables))
    });
}

/// Singleton estimates for each of `candidates` with shared random streams.
pub fn recommend_among(
    scenario: &Scenario<'_>,
    candidates: &[VariableId],
    k: usize,
    m: usize,
    seed: u64,
    top_k: usize,
) -> Recommendation {
    let baseline = baseline_draws(scenario, k, m, seed);
    let mut ranked: Vec<CounterfactualEstimate> = candidates
        .iter()
        .map(|&v| {
            let draws = draw_hypotheses(scenario, &[v], k, seed);
            summarize(vec![v], Some(&baseline), &evaluate_draws(scenario, &draws, 0.0, m, seed))
        })
        .collect();
    rank(&mut ranked);
    Recommendation { ranked, top_k }
}

/// Labs missing from `scenario`'s snapshot.
pub fn missing_labs(scenario: &Scenario<'_>, vocab: &Vocabulary) -> Vec<VariableId> {
    scenario.missing().into_iter().filter(|&v| vocab.is_lab(v)).collect()
}

/// Ranks every missing lab by expected entropy reduction at `t`.
pub fn recommend(
    model: &dyn RiskModel,
    imputation: &ImputationModel,
    vocab: &Vocabulary,
    record: &PatientRecord,
    t: f64,
    config: &PolicyConfig,
) -> Result<Recommendation> {
    config.validate()?;
    let scenario = Scenario::new(model, imputation, vocab, record, t)?;
    let candidates = missing_labs(&scenario, vocab);
    Ok(recommend_among(
        &scenario,
        &candidates,
        config.counterfactual_samples,
        config.mcs_samples,
        request_seed(config.seed, &record.patient_id, t),
        config.top_k,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(v: VariableId, reduction: f64) -> CounterfactualEstimate {
        CounterfactualEstimate {
            variables: vec![v],
            u_before: 0.5,
            u_after: 0.5 - reduction,
            reduction,
            standard_error: 0.0,
            k: 1,
            mean_p: 0.5,
            mean_band: (0.5, 0.5),
            sampled_values: None,
        }
    }

    #[test]
    fn ranks_by_reduction_then_id() {
        let mut e = vec![est(9, 0.1), est(3, 0.2), est(7, 0.1), est(1, 0.0)];
        rank(&mut e);
        let order: Vec<_> = e.iter().map(|x| x.variables[0]).collect();
        assert_eq!(order, vec![3, 7, 9, 1]);
        let r = Recommendation { ranked: e, top_k: 2 };
        assert_eq!(r.top().len(), 2);
        assert_eq!(r.best(), Some(3));
    }
}
