mod common;

use common::{mean_and_se, record, vocab};
use sepsislab::data::snapshot_at;
use sepsislab::uncertainty::{fit_imputation, ImputationModel};

fn two_var(rho: f64) -> (sepsislab::data::Vocabulary, ImputationModel) {
    let v = vocab(0, 2);
    let m = ImputationModel::from_moments(vec![0.0, 0.0], vec![1.0, rho, rho, 1.0], v.hash()).unwrap();
    (v, m)
}

#[test]
fn fully_observed_snapshot_is_copied() {
    let (v, m) = two_var(0.3);
    let r = record("a", &[(0, 0.7, 1.0), (1, -1.1, 1.5)]);
    let s = snapshot_at(&r, &v, 2.0);
    let draws = m.sample_missing(&v, &s, 50, 3).unwrap();
    assert!(draws.iter().all(|d| d == &vec![0.7, -1.1]));
}

#[test]
fn correlated_conditional_mean() {
    let (v, m) = two_var(0.8);
    let r = record("a", &[(0, 1.0, 0.0)]);
    let s = snapshot_at(&r, &v, 0.0);
    let draws = m.sample_missing(&v, &s, 10_000, 11).unwrap();
    assert!(draws.iter().all(|d| d[0] == 1.0));
    let x2: Vec<f64> = draws.iter().map(|d| d[1]).collect();
    let (mean, se) = mean_and_se(&x2);
    assert!((mean - 0.8).abs() < 3.0 * se, "mean {mean} se {se}");
    // conditional variance 1 - rho^2
    let var = x2.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (x2.len() as f64 - 1.0);
    assert!((var - 0.36).abs() < 0.03, "var {var}");
}

#[test]
fn independent_conditional_is_marginal() {
    let v = vocab(0, 2);
    let m = ImputationModel::from_moments(vec![0.5, -0.25], vec![1.0, 0.0, 0.0, 1.0], v.hash()).unwrap();
    let r = record("a", &[(0, 2.0, 0.0)]);
    let draws = m.sample_missing(&v, &snapshot_at(&r, &v, 0.0), 10_000, 5).unwrap();
    let x2: Vec<f64> = draws.iter().map(|d| d[1]).collect();
    let (mean, se) = mean_and_se(&x2);
    assert!((mean + 0.25).abs() < 3.0 * se);
}

#[test]
fn empty_observed_set_draws_unconditionally() {
    let (v, m) = two_var(0.5);
    let r = record("a", &[]);
    let draws = m.sample_missing(&v, &snapshot_at(&r, &v, 0.0), 10_000, 9).unwrap();
    for k in 0..2 {
        let xs: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        let (mean, se) = mean_and_se(&xs);
        assert!(mean.abs() < 3.0 * se);
    }
    let cov = draws.iter().map(|d| d[0] * d[1]).sum::<f64>() / draws.len() as f64;
    assert!((cov - 0.5).abs() < 0.04, "cov {cov}");
}

// x = (x0, x1, x2) with x0 observed; closed-form conditional of (x1, x2).
#[test]
fn three_variable_conditional_moments() {
    let v = vocab(0, 3);
    let mean = vec![0.2, -0.1, 0.4];
    #[rustfmt::skip]
    let cov = vec![
        1.5, 0.6, -0.3,
        0.6, 1.0, 0.2,
        -0.3, 0.2, 0.8,
    ];
    let m = ImputationModel::from_moments(mean.clone(), cov.clone(), v.hash()).unwrap();
    let x0 = 1.3;
    let r = record("a", &[(0, x0, 0.0)]);
    let draws = m.sample_missing(&v, &snapshot_at(&r, &v, 0.0), 20_000, 21).unwrap();

    let want_mean = [
        mean[1] + cov[3] / cov[0] * (x0 - mean[0]),
        mean[2] + cov[6] / cov[0] * (x0 - mean[0]),
    ];
    let want_cov = [
        [cov[4] - cov[3] * cov[1] / cov[0], cov[5] - cov[3] * cov[2] / cov[0]],
        [cov[7] - cov[6] * cov[1] / cov[0], cov[8] - cov[6] * cov[2] / cov[0]],
    ];
    let col = |k: usize| draws.iter().map(|d| d[k]).collect::<Vec<f64>>();
    let (c1, c2) = (col(1), col(2));
    let (m1, se1) = mean_and_se(&c1);
    let (m2, se2) = mean_and_se(&c2);
    assert!((m1 - want_mean[0]).abs() < 3.0 * se1);
    assert!((m2 - want_mean[1]).abs() < 3.0 * se2);
    let n = c1.len() as f64;
    let s = |a: &[f64], ma: f64, b: &[f64], mb: f64| {
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
    };
    assert!((s(&c1, m1, &c1, m1) - want_cov[0][0]).abs() < 0.03);
    assert!((s(&c2, m2, &c2, m2) - want_cov[1][1]).abs() < 0.03);
    assert!((s(&c1, m1, &c2, m2) - want_cov[0][1]).abs() < 0.03);
}

#[test]
fn draws_are_deterministic_per_index() {
    let (v, m) = two_var(0.4);
    let s = snapshot_at(&record("a", &[]), &v, 0.0);
    let a = m.sample_missing(&v, &s, 20, 8).unwrap();
    let b = m.sample_missing(&v, &s, 5, 8).unwrap();
    assert_eq!(&a[..5], &b[..]);
    assert_ne!(a, m.sample_missing(&v, &s, 20, 9).unwrap());
    assert!(m.sample_missing(&v, &s, 0, 8).is_err());
}

#[test]
fn fitted_model_is_symmetric_positive_definite() {
    let cohort = sepsislab::data::generate_cohort(3, 60, &Default::default()).unwrap();
    let m = fit_imputation(&cohort.records, &cohort.vocabulary).unwrap();
    let n = m.n_vars();
    let c = m.covariance_matrix();
    for i in 0..n {
        for j in 0..n {
            assert!((c[i * n + j] - c[j * n + i]).abs() < 1e-9);
        }
    }
    let eig = nalgebra::DMatrix::from_row_slice(n, n, c).symmetric_eigenvalues();
    assert!(eig.iter().all(|&e| e > 0.0), "{eig}");
}
