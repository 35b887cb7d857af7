//! Joint Gaussian model of standardized variable values.
//!
//! Missing entries of a snapshot are drawn from the Gaussian conditional
//! given the observed ones:
//! `mu_m + S_mo S_oo^-1 (x_o - mu_o)` with covariance
//! `S_mm - S_mo S_oo^-1 S_om`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{snapshot_at, PatientRecord, Snapshot, VariableId, Vocabulary};
use crate::error::{Error, Result};
use crate::predictor::input::BUCKET_HOURS;
use crate::rng::{rng_for, Rng};

/// Smallest eigenvalue a fitted covariance is regularized up to.
pub const MIN_EIGENVALUE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    pub vocabulary_hash: String,
    mean: Vec<f64>,
    /// Row-major `V x V`.
    covariance: Vec<f64>,
    /// Ridge added to the diagonal during fitting.
    pub ridge: f64,
    /// Variables never observed while fitting; modelled as standard normal.
    pub fallback_variables: Vec<VariableId>,
}

/// Pairwise-complete first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMoments {
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
    /// Number of rows in which both variables were observed.
    pub counts: Vec<usize>,
}

pub fn pairwise_moments(rows: &[Vec<Option<f64>>], n_vars: usize) -> PairwiseMoments {
    let v = n_vars;
    let mut n = vec![0usize; v * v];
    let mut sum_u = vec![0.0; v * v];
    let mut present = Vec::with_capacity(v);
    for row in rows {
        present.clear();
        present.extend((0..v).filter_map(|i| row[i].map(|x| (i, x))));
        for &(a, xa) in &present {
            for &(b, _) in &present {
                n[a * v + b] += 1;
                sum_u[a * v + b] += xa;
            }
        }
    }
    // sum_u[a][b] is the sum of x_a over rows where a and b are both present.
    let pair_mean = |a: usize, b: usize| sum_u[a * v + b] / n[a * v + b] as f64;
    let mut cross = vec![0.0; v * v];
    for row in rows {
        present.clear();
        present.extend((0..v).filter_map(|i| row[i].map(|x| (i, x))));
        for &(a, xa) in &present {
            for &(b, xb) in &present {
                cross[a * v + b] += (xa - pair_mean(a, b)) * (xb - pair_mean(b, a));
            }
        }
    }
    let mut mean = vec![0.0; v];
    let mut covariance = vec![0.0; v * v];
    for a in 0..v {
        if n[a * v + a] > 0 {
            mean[a] = pair_mean(a, a);
        }
        for b in 0..v {
            let k = n[a * v + b];
            if k >= 2 {
                covariance[a * v + b] = cross[a * v + b] / (k - 1) as f64;
            }
        }
    }
    PairwiseMoments {
        mean,
        covariance,
        counts: n,
    }
}

/// Standardized snapshots of every record on the half-hour grid.
pub fn snapshot_rows(records: &[PatientRecord], vocab: &Vocabulary) -> Vec<Vec<Option<f64>>> {
    let mut rows = Vec::new();
    for r in records {
        let end = r.label.map_or_else(|| r.last_time().unwrap_or(0.0), |l| l.time);
        let n = (end / BUCKET_HOURS).floor() as usize;
        for k in 0..=n {
            let s = snapshot_at(r, vocab, k as f64 * BUCKET_HOURS);
            rows.push(s.standardized(vocab));
        }
    }
    rows
}

pub fn fit_imputation(records: &[PatientRecord], vocab: &Vocabulary) -> Result<ImputationModel> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("cannot fit imputation on an empty cohort".into()));
    }
    let rows = snapshot_rows(records, vocab);
    ImputationModel::from_rows(&rows, vocab.len(), vocab.hash())
}

fn min_eigenvalue(cov: &[f64], v: usize) -> f64 {
    let m = DMatrix::from_row_slice(v, v, cov);
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

impl ImputationModel {
    pub fn from_rows(rows: &[Vec<Option<f64>>], n_vars: usize, vocabulary_hash: String) -> Result<Self> {
        let v = n_vars;
        let PairwiseMoments {
            mut mean,
            mut covariance,
            counts,
        } = pairwise_moments(rows, v);
        let mut fallback_variables = Vec::new();
        for a in 0..v {
            if counts[a * v + a] == 0 {
                log::warn!("variable {a} never observed; falling back to a standard normal marginal");
                fallback_variables.push(a);
                mean[a] = 0.0;
                for b in 0..v {
                    covariance[a * v + b] = 0.0;
                    covariance[b * v + a] = 0.0;
                }
                covariance[a * v + a] = 1.0;
            }
        }
        for a in 0..v {
            for b in a + 1..v {
                let s = 0.5 * (covariance[a * v + b] + covariance[b * v + a]);
                covariance[a * v + b] = s;
                covariance[b * v + a] = s;
            }
        }
        let mut ridge = 0.0;
        let mut min_eig = min_eigenvalue(&covariance, v);
        while min_eig < MIN_EIGENVALUE {
            let step = if ridge == 0.0 {
                (MIN_EIGENVALUE - min_eig).max(MIN_EIGENVALUE * 1e-3)
            } else {
                (MIN_EIGENVALUE - min_eig).max(ridge * 1e-6)
            };
            for a in 0..v {
                covariance[a * v + a] += step;
            }
            ridge += step;
            min_eig = min_eigenvalue(&covariance, v);
        }
        Ok(Self {
            vocabulary_hash,
            mean,
            covariance,
            ridge,
            fallback_variables,
        })
    }

    /// Builds a model from explicit moments. The covariance must be
    /// symmetric and positive semi-definite; a zero matrix is allowed and
    /// makes every draw equal to the conditional mean.
    pub fn from_moments(mean: Vec<f64>, covariance: Vec<f64>, vocabulary_hash: String) -> Result<Self> {
        let v = mean.len();
        if covariance.len() != v * v {
            return Err(Error::Shape(format!(
                "covariance has {} entries, expected {}",
                covariance.len(),
                v * v
            )));
        }
        for a in 0..v {
            for b in 0..v {
                if (covariance[a * v + b] - covariance[b * v + a]).abs() > 1e-9 {
                    return Err(Error::InvalidConfig("covariance must be symmetric".into()));
                }
            }
        }
        if v > 0 && min_eigenvalue(&covariance, v) < -1e-10 {
            return Err(Error::InvalidConfig("covariance must be positive semi-definite".into()));
        }
        Ok(Self {
            vocabulary_hash,
            mean,
            covariance,
            ridge: 0.0,
            fallback_variables: Vec::new(),
        })
    }

    pub fn n_vars(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self, a: VariableId, b: VariableId) -> f64 {
        self.covariance[a * self.n_vars() + b]
    }

    pub fn covariance_matrix(&self) -> &[f64] {
        &self.covariance
    }

    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.hash();
        if found != self.vocabulary_hash || vocab.len() != self.n_vars() {
            return Err(Error::VocabularyMismatch {
                expected: self.vocabulary_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Precomputes the conditional of the complement of `observed`.
    pub fn conditioner(&self, observed: &[VariableId]) -> Conditioner {
        let v = self.n_vars();
        let mut is_obs = vec![false; v];
        for &o in observed {
            is_obs[o] = true;
        }
        let observed: Vec<usize> = (0..v).filter(|&i| is_obs[i]).collect();
        let missing: Vec<usize> = (0..v).filter(|&i| !is_obs[i]).collect();
        let (no, nm) = (observed.len(), missing.len());
        let cov = |a: usize, b: usize| self.covariance[a * v + b];

        let s_oo = DMatrix::from_fn(no, no, |i, j| cov(observed[i], observed[j]));
        let s_mo = DMatrix::from_fn(nm, no, |i, j| cov(missing[i], observed[j]));
        let s_mm = DMatrix::from_fn(nm, nm, |i, j| cov(missing[i], missing[j]));

        // gain = S_mo S_oo^-1
        let gain = if no == 0 || nm == 0 {
            DMatrix::zeros(nm, no)
        } else {
            match s_oo.clone().cholesky() {
                Some(ch) => ch.solve(&s_mo.transpose()).transpose(),
                None => {
                    let pinv = s_oo
                        .pseudo_inverse(1e-12)
                        .expect("pseudo-inverse with non-negative epsilon");
                    &s_mo * pinv
                }
            }
        };
        let cond_cov = &s_mm - &gain * s_mo.transpose();
        let mut cond = vec![0.0; nm * nm];
        for i in 0..nm {
            for j in 0..nm {
                cond[i * nm + j] = 0.5 * (cond_cov[(i, j)] + cond_cov[(j, i)]);
            }
        }
        Conditioner {
            mu_o: observed.iter().map(|&i| self.mean[i]).collect(),
            mu_m: missing.iter().map(|&i| self.mean[i]).collect(),
            gain: gain.transpose().as_slice().to_vec(),
            chol: psd_cholesky(&cond, nm),
            cond_cov: cond,
            observed,
            missing,
        }
    }

    /// `n` completed standardized vectors for `snapshot`; observed entries
    /// are copied, missing ones drawn from the conditional. Draw `i` uses
    /// its own stream derived from `(seed, i)`.
    pub fn sample_missing(
        &self,
        vocab: &Vocabulary,
        snapshot: &Snapshot,
        n: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::InvalidConfig("sample count must be at least 1".into()));
        }
        self.check_vocabulary(vocab)?;
        let std = snapshot.standardized(vocab);
        let cond = self.conditioner(&snapshot.observed());
        let x_o: Vec<f64> = cond.observed.iter().map(|&i| std[i].expect("observed")).collect();
        let mean = cond.mean(&x_o);
        Ok((0..n)
            .map(|i| {
                let mut rng = rng_for(seed, &[i as u64]);
                let draw = cond.sample_around(&mean, &mut rng);
                let mut full: Vec<f64> = std.iter().map(|x| x.unwrap_or(0.0)).collect();
                for (k, &m) in cond.missing.iter().enumerate() {
                    full[m] = draw[k];
                }
                full
            })
            .collect())
    }
}

/// Conditional distribution of the missing block given the observed block.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioner {
    pub observed: Vec<VariableId>,
    pub missing: Vec<VariableId>,
    mu_o: Vec<f64>,
    mu_m: Vec<f64>,
    /// Column-major `m x o` (row-major `o x m`).
    gain: Vec<f64>,
    cond_cov: Vec<f64>,
    /// Row-major lower-triangular factor of the conditional covariance.
    chol: Vec<f64>,
}

impl Conditioner {
    /// Conditional mean given observed values in `observed` order.
    pub fn mean(&self, x_o: &[f64]) -> Vec<f64> {
        let (no, nm) = (self.observed.len(), self.missing.len());
        let mut out = self.mu_m.clone();
        for j in 0..no {
            let d = x_o[j] - self.mu_o[j];
            if d == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.gain[j * nm + i] * d;
            }
        }
        out
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cond_cov
    }

    pub fn sample_around(&self, mean: &[f64], rng: &mut Rng) -> Vec<f64> {
        let nm = self.missing.len();
        let z: Vec<f64> = (0..nm).map(|_| StandardNormal.sample(rng)).collect();
        let mut out = mean.to_vec();
        for i in 0..nm {
            let row = &self.chol[i * nm..i * nm + i + 1];
            out[i] += row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>();
        }
        out
    }

    pub fn sample(&self, x_o: &[f64], rng: &mut Rng) -> Vec<f64> {
        self.sample_around(&self.mean(x_o), rng)
    }
}

/// Cholesky factor of a positive semi-definite matrix; directions with no
/// variance get zero columns.
fn psd_cholesky(a: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(1e-300);
    for j in 0..n {
        let d = a[j * n + j] - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let s = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = s / ljj;
        }
    }
    l
}

/// Dense full-data moments used as an oracle in tests.
#[doc(hidden)]
pub fn dense_moments(rows: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len();
    let v = rows[0].len();
    let x = DMatrix::from_fn(n, v, |i, j| rows[i][j]);
    let mean = x.row_mean().transpose();
    let centered = DMatrix::from_fn(n, v, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * centered / (n as f64 - 1.0);
    (mean, cov)
}
