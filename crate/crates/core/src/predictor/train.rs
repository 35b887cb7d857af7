//! Mini-batch gradient descent for the LSTM with validation-AUC model selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{PatientRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::compute_auc;
use crate::predictor::input::ModelInput;
use crate::predictor::lstm::{LstmParams, LstmShape};
use crate::predictor::model::LstmModel;
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSize {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub attention_dim: usize,
}

impl Default for ModelSize {
    fn default() -> Self {
        Self {
            embed_dim: 256,
            hidden_dim: 256,
            layers: 2,
            attention_dim: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    /// Adam with the usual moment decay rates (0.9, 0.999).
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Train / validation / test.
    pub split_fractions: [f64; 3],
    pub max_timesteps: usize,
    /// Global gradient-norm cap; `<= 0` disables clipping.
    pub gradient_clip: f64,
    pub size: ModelSize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: 0.003,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            split_fractions: [0.8, 0.1, 0.1],
            max_timesteps: 100,
            gradient_clip: 5.0,
            size: ModelSize::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let f = self.split_fractions;
        if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split fractions must be in [0,1] and sum to 1, got {f:?}")));
        }
        if f[0] == 0.0 || f[1] == 0.0 {
            return Err(Error::InvalidConfig("train and validation fractions must be positive".into()));
        }
        if self.max_timesteps == 0 {
            return Err(Error::InvalidConfig("max_timesteps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 0 means the initial parameters were never beaten.
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Label-stratified shuffled split of `labels` by `fractions`.
pub fn split_indices(labels: &[bool], fractions: [f64; 3], seed: u64) -> Split {
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (class, key) in [(false, 0u64), (true, 1)] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng_for(seed, &[0x5917, key]));
        let n = idx.len();
        let n_train = (fractions[0] * n as f64).round() as usize;
        let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
        split.train.extend_from_slice(&idx[..n_train]);
        split.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

pub fn labelled(records: &[PatientRecord]) -> Result<Vec<bool>> {
    records
        .iter()
        .map(|r| {
            r.label
                .map(|l| l.positive)
                .ok_or_else(|| Error::InvalidConfig(format!("record {} has no label", r.patient_id)))
        })
        .collect()
}

fn example(model: &LstmModel, record: &PatientRecord, vocab: &Vocabulary) -> ModelInput {
    let t = record.label.expect("checked labelled").time;
    model.input(record, vocab, t)
}

fn mean_loss(params: &LstmParams, inputs: &[ModelInput], labels: &[bool]) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(inputs.len());
    for (x, &y) in inputs.iter().zip(labels) {
        let p = params.forward(x).expect("inputs checked").probability;
        loss += params.loss(x, y);
        probs.push(p);
    }
    (loss / inputs.len().max(1) as f64, probs)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Applies the update for gradient `scale * grad`.
    fn step(&mut self, theta: &mut [f64], grad: &[f64], scale: f64, lr: f64) {
        if lr == 0.0 {
            return;
        }
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..theta.len() {
            let g = grad[i] * scale;
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            theta[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains an LSTM on each record's input at its label time.
///
/// Records are split with [`split_indices`]; the returned parameters are
/// those with the best validation AUC (earliest on ties).
pub fn train(records: &[PatientRecord], vocab: &Vocabulary, config: &TrainConfig) -> Result<(LstmModel, TrainReport)> {
    config.validate()?;
    let labels = labelled(records)?;
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass(labels.first().copied().unwrap_or(false)));
    }
    let n_flags = records[0].static_info.history_flags.len();
    let shape = LstmShape {
        n_variables: vocab.len(),
        static_dim: crate::data::StaticInfo::feature_len(n_flags),
        embed_dim: config.size.embed_dim,
        hidden_dim: config.size.hidden_dim,
        layers: config.size.layers,
        attention_dim: config.size.attention_dim,
    };
    let decay = vocab.specs().iter().map(|s| s.staleness_hours).collect();
    let mut model = LstmModel::new(LstmParams::init(shape, decay, config.seed)?, config.max_timesteps)?;

    let split = split_indices(&labels, config.split_fractions, config.seed);
    let prepare = |idx: &[usize], m: &LstmModel| -> Result<(Vec<ModelInput>, Vec<bool>)> {
        let mut xs = Vec::with_capacity(idx.len());
        for &i in idx {
            let x = example(m, &records[i], vocab);
            m.params.check_input(&x)?;
            xs.push(x);
        }
        Ok((xs, idx.iter().map(|&i| labels[i]).collect()))
    };
    let (train_x, train_y) = prepare(&split.train, &model)?;
    let (val_x, val_y) = prepare(&split.val, &model)?;
    let val_auc_of = |probs: &[f64]| compute_auc(probs, &val_y).unwrap_or(0.5);

    let (_, p0) = mean_loss(&model.params, &val_x, &val_y);
    let mut best = (model.params.clone(), val_auc_of(&p0), 0usize);
    let mut stats = Vec::with_capacity(config.epochs);
    let n_params = model.params.n_params();
    let mut grad = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut adam = Adam::new(n_params);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng_for(config.seed, &[0xe90c, epoch as u64]));
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                total += model.params.accumulate_gradient(&train_x[i], train_y[i], &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() * scale;
            let clip = if config.gradient_clip > 0.0 && norm > config.gradient_clip {
                config.gradient_clip / norm
            } else {
                1.0
            };
            let scale = scale * clip;
            match config.optimizer {
                Optimizer::Sgd => {
                    let step = config.learning_rate * scale;
                    if step != 0.0 {
                        for (w, g) in model.params.theta_mut().iter_mut().zip(&grad) {
                            *w -= step * g;
                        }
                    }
                }
                Optimizer::Adam => adam.step(model.params.theta_mut(), &grad, scale, config.learning_rate),
            }
        }
        let (val_loss, probs) = mean_loss(&model.params, &val_x, &val_y);
        let val_auc = val_auc_of(&probs);
        let s = EpochStats {
            epoch,
            train_loss: total / train_x.len() as f64,
            val_loss,
            val_auc,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, val loss {:.4}, val AUC {:.4}",
            s.train_loss,
            s.val_loss,
            s.val_auc
        );
        if val_auc > best.1 {
            best = (model.params.clone(), val_auc, epoch);
        }
        stats.push(s);
    }
    model.params = best.0;
    Ok((
        model,
        TrainReport {
            epochs: stats,
            best_epoch: best.2,
            best_val_auc: best.1,
            n_train: split.train.len(),
            n_val: split.val.len(),
            n_test: split.test.len(),
        },
    ))
}
