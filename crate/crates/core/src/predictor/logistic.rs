//! L2-regularized logistic regression on the latest standardized values.
//!
//! Missing variables are imputed with the population mean, i.e. 0 in
//! standardized space. Fitted by Newton's method, so the result does not
//! depend on a seed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{snapshot_at, PatientRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::predictor::math::{dot, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub const KIND: &'static str = "logistic";

    pub fn zeros(n: usize) -> Self {
        Self {
            weights: vec![0.0; n],
            bias: 0.0,
        }
    }

    pub fn features(record: &PatientRecord, vocab: &Vocabulary, t: f64) -> Vec<f64> {
        snapshot_at(record, vocab, t)
            .standardized(vocab)
            .into_iter()
            .map(|x| x.unwrap_or(0.0))
            .collect()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn predict_features(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Minimizes mean log-loss plus `l2/2 * |w|^2` (bias unpenalized).
    pub fn fit(x: &[Vec<f64>], y: &[bool], l2: f64) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
        }
        if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
            return Err(Error::SingleClass(y[0]));
        }
        if !(l2 > 0.0) {
            return Err(Error::InvalidConfig("l2 penalty must be positive".into()));
        }
        let n = x.len();
        let d = x[0].len();
        let mut beta = DVector::<f64>::zeros(d + 1);
        let row = |i: usize, j: usize| if j < d { x[i][j] } else { 1.0 };
        for _ in 0..100 {
            let mut grad = DVector::<f64>::zeros(d + 1);
            let mut hess = DMatrix::<f64>::zeros(d + 1, d + 1);
            for i in 0..n {
                let z: f64 = (0..=d).map(|j| row(i, j) * beta[j]).sum();
                let p = sigmoid(z);
                let r = p - if y[i] { 1.0 } else { 0.0 };
                let w = (p * (1.0 - p)).max(1e-12);
                for a in 0..=d {
                    grad[a] += r * row(i, a) / n as f64;
                    for b in 0..=a {
                        hess[(a, b)] += w * row(i, a) * row(i, b) / n as f64;
                    }
                }
            }
            for a in 0..=d {
                for b in 0..a {
                    hess[(b, a)] = hess[(a, b)];
                }
            }
            for a in 0..d {
                grad[a] += l2 * beta[a];
                hess[(a, a)] += l2;
            }
            hess[(d, d)] += 1e-12;
            let step = hess
                .cholesky()
                .ok_or_else(|| Error::InvalidConfig("singular Hessian in logistic fit".into()))?
                .solve(&grad);
            beta -= &step;
            if step.amax() < 1e-10 {
                break;
            }
        }
        Ok(Self {
            weights: beta.as_slice()[..d].to_vec(),
            bias: beta[d],
        })
    }

    /// Fits on each labelled record's snapshot at its label time.
    pub fn fit_records(records: &[PatientRecord], vocab: &Vocabulary, l2: f64) -> Result<Self> {
        let (x, y): (Vec<_>, Vec<_>) = records
            .iter()
            .filter_map(|r| r.label.map(|l| (Self::features(r, vocab, l.time), l.positive)))
            .unzip();
        if x.is_empty() {
            return Err(Error::InvalidConfig("no labelled records to fit".into()));
        }
        Self::fit(&x, &y, l2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::compute_auc;

    #[test]
    fn zero_weights_give_half() {
        let m = LogisticModel::zeros(3);
        assert_eq!(m.predict_features(&[5.0, -2.0, 1.0]), 0.5);
    }

    #[test]
    fn separable_one_dimensional() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        let y: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let m = LogisticModel::fit(&x, &y, 1e-2).unwrap();
        assert!(m.weights[0] > 0.0);
        let scores: Vec<f64> = x.iter().map(|r| m.predict_features(r)).collect();
        assert_eq!(compute_auc(&scores, &y).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_prediction() {
        let m = LogisticModel {
            weights: vec![0.5, -1.0, 2.0],
            bias: -0.25,
        };
        // 0.5*1 - 1*2 + 2*0.5 - 0.25 = -0.75
        let want = 1.0 / (1.0 + 0.75f64.exp());
        assert!((m.predict_features(&[1.0, 2.0, 0.5]) - want).abs() < 1e-15);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(LogisticModel::fit(&x, &[true, true], 1.0), Err(Error::SingleClass(true))));
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let x: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let y: Vec<bool> = (0..30).map(|i| (i * 7) % 5 < 2).collect();
        let l2 = 0.1;
        let m = LogisticModel::fit(&x, &y, l2).unwrap();
        let n = x.len() as f64;
        let mut g = [0.0; 3];
        for (xi, &yi) in x.iter().zip(&y) {
            let r = m.predict_features(xi) - if yi { 1.0 } else { 0.0 };
            g[0] += r * xi[0] / n;
            g[1] += r * xi[1] / n;
            g[2] += r / n;
        }
        g[0] += l2 * m.weights[0];
        g[1] += l2 * m.weights[1];
        assert!(g.iter().all(|v| v.abs() < 1e-9), "{g:?}");
    }
}
