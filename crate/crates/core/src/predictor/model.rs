//! Risk models behind one interface, and a name-keyed registry of loaders.

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::data::{PatientRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::predictor::input::{build_input, ModelInput, Step, StepEntry};
use crate::predictor::logistic::LogisticModel;
use crate::predictor::lstm::{LstmParams, PrefixState};
use crate::predictor::math::sigmoid;

/// A query fixed at one patient and time; scores completions of the
/// missing variables.
pub trait PreparedQuery {
    /// Probability given the extra entries (standardized values, ages
    /// relative to the query time). An empty completion scores the record
    /// as it stands.
    fn score(&self, completion: &[StepEntry]) -> f64;
}

pub trait RiskModel: Debug + Send + Sync {
    /// Registry key, stored in checkpoints.
    fn kind(&self) -> &'static str;

    fn n_variables(&self) -> usize;

    fn prepare<'a>(
        &'a self,
        record: &PatientRecord,
        vocab: &Vocabulary,
        t: f64,
    ) -> Result<Box<dyn PreparedQuery + 'a>>;

    fn to_json(&self) -> Result<serde_json::Value>;

    fn predict(&self, record: &PatientRecord, vocab: &Vocabulary, t: f64) -> Result<f64> {
        Ok(self.prepare(record, vocab, t)?.score(&[]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub params: LstmParams,
    pub max_timesteps: usize,
}

impl LstmModel {
    pub const KIND: &'static str = "lstm";

    pub fn new(params: LstmParams, max_timesteps: usize) -> Result<Self> {
        if max_timesteps == 0 {
            return Err(Error::InvalidConfig("max_timesteps must be at least 1".into()));
        }
        Ok(Self { params, max_timesteps })
    }

    /// Input at `t` with nothing imputed.
    pub fn input(&self, record: &PatientRecord, vocab: &Vocabulary, t: f64) -> ModelInput {
        build_input(record, vocab, t, self.max_timesteps, &[])
    }
}

struct LstmQuery<'a> {
    observed: Step,
    prefix: PrefixState<'a>,
}

impl PreparedQuery for LstmQuery<'_> {
    fn score(&self, completion: &[StepEntry]) -> f64 {
        if completion.is_empty() {
            return self.prefix.finish(&self.observed);
        }
        let mut step = self.observed.clone();
        step.entries.extend_from_slice(completion);
        self.prefix.finish(&step)
    }
}

impl RiskModel for LstmModel {
    fn kind(&self) -> &'static str {
        Self::KIND
    }

    fn n_variables(&self) -> usize {
        self.params.shape().n_variables
    }

    fn prepare<'a>(
        &'a self,
        record: &PatientRecord,
        vocab: &Vocabulary,
        t: f64,
    ) -> Result<Box<dyn PreparedQuery + 'a>> {
        let mut input = self.input(record, vocab, t);
        self.params.check_input(&input)?;
        let observed = input.steps.pop().expect("query step present");
        let prefix = self.params.encode_prefix(&input.statics, &input.steps);
        Ok(Box::new(LstmQuery { observed, prefix }))
    }

    fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

struct LogisticQuery<'a> {
    model: &'a LogisticModel,
    features: Vec<f64>,
}

impl PreparedQuery for LogisticQuery<'_> {
    fn score(&self, completion: &[StepEntry]) -> f64 {
        let mut z = self.model.logit(&self.features);
        for e in completion {
            z += self.model.weights[e.variable] * (e.value - self.features[e.variable]);
        }
        sigmoid(z)
    }
}

impl RiskModel for LogisticModel {
    fn kind(&self) -> &'static str {
        Self::KIND
    }

    fn n_variables(&self) -> usize {
        self.weights.len()
    }

    fn prepare<'a>(
        &'a self,
        record: &PatientRecord,
        vocab: &Vocabulary,
        t: f64,
    ) -> Result<Box<dyn PreparedQuery + 'a>> {
        if vocab.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "logistic model has {} weights, vocabulary has {} variables",
                self.weights.len(),
                vocab.len()
            )));
        }
        Ok(Box::new(LogisticQuery {
            model: self,
            features: LogisticModel::features(record, vocab, t),
        }))
    }

    fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

type Loader = fn(serde_json::Value) -> Result<Box<dyn RiskModel>>;

/// Deserializers keyed by [`RiskModel::kind`].
pub struct ModelRegistry {
    loaders: BTreeMap<&'static str, Loader>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = Self {
            loaders: BTreeMap::new(),
        };
        r.register(LstmModel::KIND, |v| {
            let m: LstmModel = serde_json::from_value(v)?;
            Ok(Box::new(LstmModel::new(m.params, m.max_timesteps)?))
        });
        r.register(LogisticModel::KIND, |v| {
            let m: LogisticModel = serde_json::from_value(v)?;
            Ok(Box::new(m))
        });
        r
    }
}

impl ModelRegistry {
    pub fn register(&mut self, kind: &'static str, loader: Loader) {
        self.loaders.insert(kind, loader);
    }

    pub fn kinds(&self) -> Vec<String> {
        self.loaders.keys().map(|k| k.to_string()).collect()
    }

    pub fn load(&self, kind: &str, value: serde_json::Value) -> Result<Box<dyn RiskModel>> {
        let loader = self.loaders.get(kind).ok_or_else(|| Error::UnknownStrategy {
            kind: "model".into(),
            name: kind.into(),
            available: self.kinds(),
        })?;
        loader(value)
    }
}
