//! Monte-Carlo prediction over the missing variables.

use serde::{Deserialize, Serialize};

use crate::data::{snapshot_at, PatientRecord, Snapshot, VariableId, Vocabulary};
use crate::error::{Error, Result};
use crate::predictor::input::StepEntry;
use crate::predictor::model::{PreparedQuery, RiskModel};
use crate::rng::{request_seed, rng_for};
use crate::uncertainty::entropy::binary_entropy;
use crate::uncertainty::imputation::{Conditioner, ImputationModel};
use crate::uncertainty::policy::PolicyConfig;

/// Half-width multiplier of the reported band.
pub const BAND_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertainPrediction {
    pub p_mean: f64,
    /// Population standard deviation over the draws.
    pub p_std: f64,
    /// Entropy of `p_mean`, in nats.
    pub entropy: f64,
    pub band: (f64, f64),
    pub n_samples: usize,
}

impl UncertainPrediction {
    pub fn from_samples(ps: &[f64]) -> Self {
        assert!(!ps.is_empty(), "at least one sample");
        let n = ps.len() as f64;
        let mean = ps.iter().sum::<f64>() / n;
        let var = ps.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            p_mean: mean,
            p_std: std,
            entropy: binary_entropy(mean),
            band: (
                (mean - BAND_Z * std).clamp(0.0, mean),
                (mean + BAND_Z * std).clamp(mean, 1.0),
            ),
            n_samples: ps.len(),
        }
    }
}

/// A hypothesized value: standardized, observed `age` hours before the
/// query time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub variable: VariableId,
    pub value: f64,
    pub age: f64,
}

/// One patient at one query time, ready for repeated Monte-Carlo scoring.
pub struct Scenario<'a> {
    pub snapshot: Snapshot,
    standardized: Vec<Option<f64>>,
    query: Box<dyn PreparedQuery + 'a>,
    imputation: &'a ImputationModel,
}

pub fn check_compatible(model: &dyn RiskModel, imputation: &ImputationModel, vocab: &Vocabulary) -> Result<()> {
    imputation.check_vocabulary(vocab)?;
    if model.n_variables() != vocab.len() {
        return Err(Error::VocabularyMismatch {
            expected: format!("{} variables", model.n_variables()),
            found: format!("{} variables", vocab.len()),
        });
    }
    Ok(())
}

impl<'a> Scenario<'a> {
    pub fn new(
        model: &'a dyn RiskModel,
        imputation: &'a ImputationModel,
        vocab: &Vocabulary,
        record: &PatientRecord,
        t: f64,
    ) -> Result<Self> {
        check_compatible(model, imputation, vocab)?;
        let snapshot = snapshot_at(record, vocab, t);
        Ok(Self {
            standardized: snapshot.standardized(vocab),
            query: model.prepare(record, vocab, t)?,
            snapshot,
            imputation,
        })
    }

    pub fn missing(&self) -> Vec<VariableId> {
        self.snapshot.missing()
    }

    /// Conditional of the remaining missing variables once `extra` are known.
    pub fn conditioner(&self, extra: &[VariableId]) -> Conditioner {
        let mut observed = self.snapshot.observed();
        observed.extend_from_slice(extra);
        self.imputation.conditioner(&observed)
    }

    /// Observed standardized values in `cond.observed` order, taking
    /// hypothesized values where the snapshot has none.
    pub fn observed_values(&self, cond: &Conditioner, hypotheses: &[Hypothesis]) -> Vec<f64> {
        cond.observed
            .iter()
            .map(|&v| {
                self.standardized[v].unwrap_or_else(|| {
                    hypotheses
                        .iter()
                        .find(|h| h.variable == v)
                        .expect("conditioner observed set covers the hypotheses")
                        .value
                })
            })
            .collect()
    }

    /// `m` draws of the missing variables given the snapshot and
    /// `hypotheses`; draw `j` uses the stream `(seed, j)`.
    pub fn predict_given(&self, cond: &Conditioner, hypotheses: &[Hypothesis], m: usize, seed: u64) -> UncertainPrediction {
        let mut completion: Vec<StepEntry> = hypotheses
            .iter()
            .map(|h| StepEntry {
                variable: h.variable,
                value: h.value,
                age: h.age,
            })
            .collect();
        if cond.missing.is_empty() {
            return UncertainPrediction::from_samples(&[self.query.score(&completion)]);
        }
        let fixed = completion.len();
        let mean = cond.mean(&self.observed_values(cond, hypotheses));
        let ps: Vec<f64> = (0..m.max(1))
            .map(|j| {
                let draw = cond.sample_around(&mean, &mut rng_for(seed, &[j as u64]));
                completion.truncate(fixed);
                completion.extend(cond.missing.iter().zip(&draw).map(|(&variable, &value)| StepEntry {
                    variable,
                    value,
                    age: 0.0,
                }));
                self.query.score(&completion)
            })
            .collect();
        UncertainPrediction::from_samples(&ps)
    }

    pub fn predict(&self, m: usize, seed: u64) -> UncertainPrediction {
        self.predict_given(&self.conditioner(&[]), &[], m, seed)
    }
}

/// Mean, spread and entropy of the risk at `t` with missing variables
/// sampled `config.mcs_samples` times. The seed is derived from
/// `(config.seed, patient_id, t)`.
pub fn predict_uncertain(
    model: &dyn RiskModel,
    imputation: &ImputationModel,
    vocab: &Vocabulary,
    record: &PatientRecord,
    t: f64,
    config: &PolicyConfig,
) -> Result<UncertainPrediction> {
    config.validate()?;
    let scenario = Scenario::new(model, imputation, vocab, record, t)?;
    Ok(scenario.predict(config.mcs_samples, request_seed(config.seed, &record.patient_id, t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_samples() {
        let u = UncertainPrediction::from_samples(&[0.2, 0.4]);
        assert!((u.p_mean - 0.3).abs() < 1e-15);
        assert!((u.p_std - 0.1).abs() < 1e-15);
        assert!((u.band.0 - (0.3 - 0.196)).abs() < 1e-12);
        assert!((u.band.1 - (0.3 + 0.196)).abs() < 1e-12);
        let c = UncertainPrediction::from_samples(&[0.01, 0.01, 0.5]);
        assert_eq!(c.band.0, 0.0);
        let one = UncertainPrediction::from_samples(&[0.5]);
        assert_eq!(one.p_std, 0.0);
        assert!((one.entropy - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
