#![allow(dead_code)]

use sepsislab::data::{Label, Observation, PatientRecord, Sex, StaticInfo, VariableKind, VariableSpec, Vocabulary};
use sepsislab::predictor::{LogisticModel, LstmModel, LstmParams, LstmShape};
use sepsislab::uncertainty::ImputationModel;

/// `n_vitals` vitals followed by `n_labs` labs, all standard normal.
pub fn vocab(n_vitals: usize, n_labs: usize) -> Vocabulary {
    let specs = (0..n_vitals + n_labs)
        .map(|id| {
            let vital = id < n_vitals;
            VariableSpec {
                id,
                name: if vital { format!("V{id}") } else { format!("L{id}") },
                unit: "u".into(),
                kind: if vital { VariableKind::Vital } else { VariableKind::Lab },
                population_mean: 0.0,
                population_std: 1.0,
                staleness_hours: if vital { 8.0 } else { 24.0 },
            }
        })
        .collect();
    Vocabulary::new(specs).unwrap()
}

pub fn statics() -> StaticInfo {
    StaticInfo {
        age: 64.0,
        sex: Sex::Female,
        history_flags: vec![true, false],
    }
}

pub fn record(id: &str, obs: &[(usize, f64, f64)]) -> PatientRecord {
    let obs = obs
        .iter()
        .map(|&(variable, value, time)| Observation { variable, value, time })
        .collect();
    PatientRecord::new(id, statics(), obs, None).unwrap()
}

pub fn labelled(id: &str, obs: &[(usize, f64, f64)], positive: bool, time: f64) -> PatientRecord {
    let mut r = record(id, obs);
    r.label = Some(Label { positive, time });
    r
}

pub fn lstm(vocab: &Vocabulary, hidden: usize, seed: u64) -> LstmModel {
    let shape = LstmShape {
        n_variables: vocab.len(),
        static_dim: StaticInfo::feature_len(2),
        embed_dim: hidden,
        hidden_dim: hidden,
        layers: 2,
        attention_dim: hidden.div_ceil(2),
    };
    let decay = vocab.specs().iter().map(|s| s.staleness_hours).collect();
    LstmModel::new(LstmParams::init(shape, decay, seed).unwrap(), 100).unwrap()
}

pub fn logistic(weights: Vec<f64>, bias: f64) -> LogisticModel {
    LogisticModel { weights, bias }
}

pub fn identity_imputation(vocab: &Vocabulary) -> ImputationModel {
    let v = vocab.len();
    let mut cov = vec![0.0; v * v];
    for i in 0..v {
        cov[i * v + i] = 1.0;
    }
    ImputationModel::from_moments(vec![0.0; v], cov, vocab.hash()).unwrap()
}

/// Equicorrelated unit-variance Gaussian.
pub fn equicorrelated(vocab: &Vocabulary, rho: f64) -> ImputationModel {
    let v = vocab.len();
    let cov = (0..v * v).map(|k| if k / v == k % v { 1.0 } else { rho }).collect();
    ImputationModel::from_moments(vec![0.0; v], cov, vocab.hash()).unwrap()
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
