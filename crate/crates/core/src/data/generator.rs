//! Synthetic cohort generator.
//!
//! Each patient carries a latent severity process `s(t)` in `[0, 1]`.
//! Positive patients ramp towards `s = 1` at their onset time, which falls
//! within the prediction horizon after the label time. Some negatives get a
//! transient non-septic bump. Every variable is generated in standardized
//! space as `baseline + loading * s(t) + noise` and mapped back to units.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::data::io::Cohort;
use crate::data::record::{Label, Observation, PatientRecord, Sex, StaticInfo};
use crate::data::vocabulary::{VariableKind, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub prevalence: f64,
    /// Probability that a lab is not drawn at a given sampling time.
    pub missing_fraction: f64,
    pub mean_sampling_interval_hours: f64,
    pub min_stay_hours: f64,
    pub max_stay_hours: f64,
    pub horizon_hours: f64,
    pub n_flags: usize,
    pub baseline_std: f64,
    pub noise_std: f64,
    /// Fraction of negatives with a transient non-septic deterioration.
    pub mimic_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            prevalence: 0.2,
            missing_fraction: 0.85,
            mean_sampling_interval_hours: 1.0,
            min_stay_hours: 8.0,
            max_stay_hours: 36.0,
            horizon_hours: 4.0,
            n_flags: 4,
            baseline_std: 0.8,
            noise_std: 0.3,
            mimic_fraction: 0.3,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("prevalence", self.prevalence)?;
        unit("missing_fraction", self.missing_fraction)?;
        unit("mimic_fraction", self.mimic_fraction)?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("mean_sampling_interval_hours", self.mean_sampling_interval_hours)?;
        positive("min_stay_hours", self.min_stay_hours)?;
        positive("horizon_hours", self.horizon_hours)?;
        if !(self.max_stay_hours >= self.min_stay_hours) {
            return Err(Error::InvalidConfig(
                "max_stay_hours must be at least min_stay_hours".into(),
            ));
        }
        if !(self.baseline_std >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig("standard deviations must be non-negative".into()));
        }
        Ok(())
    }
}

/// How strongly a variable tracks latent severity, in population SDs.
pub fn severity_loading(name: &str) -> f64 {
    match name {
        "HR" => 0.5,
        "RR" => 0.4,
        "Temp" => 0.3,
        "SBP" => -0.3,
        "DBP" => -0.2,
        "SpO2" => -0.2,
        "Lactate" => 2.0,
        "WBC" => 1.4,
        "Creatinine" => 0.9,
        "Bilirubin" => 0.7,
        "Platelets" => -0.8,
        "Bicarbonate" => -0.6,
        "BUN" => 0.3,
        "Glucose" => 0.2,
        _ => 0.0,
    }
}

enum Course {
    Septic { onset: f64, ramp: f64, severity: f64 },
    Mimic { center: f64, width: f64, amplitude: f64 },
    Stable,
}

impl Course {
    fn severity(&self, t: f64) -> f64 {
        match *self {
            Course::Septic { onset, ramp, severity } => {
                severity * ((t - (onset - ramp)) / ramp).clamp(0.0, 1.0)
            }
            Course::Mimic { center, width, amplitude } => {
                amplitude * (-((t - center) / width).powi(2)).exp()
            }
            Course::Stable => 0.0,
        }
    }
}

pub fn generate_cohort(seed: u64, n_patients: usize, config: &GeneratorConfig) -> Result<Cohort> {
    generate_with(seed, n_patients, config, Vocabulary::default_clinical())
}

pub fn generate_with(
    seed: u64,
    n_patients: usize,
    config: &GeneratorConfig,
    vocabulary: Vocabulary,
) -> Result<Cohort> {
    config.validate()?;
    if n_patients == 0 {
        return Err(Error::InvalidConfig("n_patients must be at least 1".into()));
    }
    let n_pos = (config.prevalence * n_patients as f64).round() as usize;
    let mut labels: Vec<bool> = (0..n_patients).map(|i| i < n_pos).collect();
    labels.shuffle(&mut rng_for(seed, &[u64::MAX]));

    let records = labels
        .iter()
        .enumerate()
        .map(|(i, &positive)| {
            let mut rng = rng_for(seed, &[i as u64]);
            generate_patient(&mut rng, i, positive, config, &vocabulary)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Cohort { vocabulary, records })
}

fn generate_patient(
    rng: &mut Rng,
    index: usize,
    positive: bool,
    config: &GeneratorConfig,
    vocab: &Vocabulary,
) -> Result<PatientRecord> {
    let label_time = round2(rng.random_range(config.min_stay_hours..=config.max_stay_hours));
    let course = if positive {
        let onset = label_time + rng.random_range(0.0..config.horizon_hours);
        let ramp = rng.random_range(6.0..14.0f64).min(onset - 1.0).max(1.0);
        Course::Septic {
            onset,
            ramp,
            severity: rng.random_range(0.7..1.3),
        }
    } else if rng.random_bool(config.mimic_fraction) {
        Course::Mimic {
            center: rng.random_range(0.0..=label_time),
            width: rng.random_range(2.0..6.0),
            amplitude: rng.random_range(0.3..0.7),
        }
    } else {
        Course::Stable
    };

    let static_info = StaticInfo {
        age: rng.random_range(20..=90) as f64,
        sex: if rng.random_bool(0.5) { Sex::Female } else { Sex::Male },
        history_flags: (0..config.n_flags).map(|_| rng.random_bool(0.2)).collect(),
    };

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let baselines: Vec<f64> = vocab
        .specs()
        .iter()
        .map(|_| config.baseline_std * unit.sample(rng))
        .collect();
    let loadings: Vec<f64> = vocab.specs().iter().map(|s| severity_loading(&s.name)).collect();

    let extra = (config.mean_sampling_interval_hours - 0.25).max(1e-3);
    let gap = Exp::new(1.0 / extra).expect("positive rate");
    let mut times = Vec::new();
    let mut t = 0.0;
    while t <= label_time {
        times.push(round2(t));
        t += 0.25 + gap.sample(rng);
    }

    let mut observations = Vec::new();
    for &t in &times {
        let s = course.severity(t);
        for spec in vocab.specs() {
            if spec.kind == VariableKind::Lab && rng.random_bool(config.missing_fraction) {
                continue;
            }
            let z = baselines[spec.id] + loadings[spec.id] * s + config.noise_std * unit.sample(rng);
            let mut value = round2(spec.destandardize(z)).max(0.0);
            if spec.name == "SpO2" {
                value = value.min(100.0);
            }
            observations.push(Observation {
                variable: spec.id,
                value,
                time: t,
            });
        }
    }

    PatientRecord::new(
        format!("P{index:05}"),
        static_info,
        observations,
        Some(Label {
            positive,
            time: label_time,
        }),
    )
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_cohort() {
        let cfg = GeneratorConfig::default();
        let a = generate_cohort(1, 10, &cfg).unwrap();
        let b = generate_cohort(1, 10, &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_cohort(2, 10, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_missingness_observes_everything_at_every_time() {
        let cfg = GeneratorConfig {
            missing_fraction: 0.0,
            ..Default::default()
        };
        let cohort = generate_cohort(3, 5, &cfg).unwrap();
        let v = cohort.vocabulary.len();
        for r in &cohort.records {
            let mut by_time: std::collections::BTreeMap<u64, Vec<usize>> = Default::default();
            for o in r.observations() {
                by_time.entry(o.time.to_bits()).or_default().push(o.variable);
            }
            for vars in by_time.values() {
                assert_eq!(vars, &(0..v).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn prevalence_close_to_configured() {
        let cohort = generate_cohort(11, 2000, &GeneratorConfig::default()).unwrap();
        let pos = cohort
            .records
            .iter()
            .filter(|r| r.label.unwrap().positive)
            .count() as f64;
        assert!((pos / 2000.0 - 0.2).abs() <= 0.02);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = GeneratorConfig {
            missing_fraction: -0.1,
            ..Default::default()
        };
        assert!(generate_cohort(1, 3, &cfg).is_err());
        assert!(generate_cohort(1, 0, &GeneratorConfig::default()).is_err());
    }

    #[test]
    fn positives_show_rising_lactate() {
        let cohort = generate_cohort(5, 400, &GeneratorConfig::default()).unwrap();
        let lactate = cohort.vocabulary.id_of("Lactate").unwrap();
        let mean_last = |positive: bool| {
            let vals: Vec<f64> = cohort
                .records
                .iter()
                .filter(|r| r.label.unwrap().positive == positive)
                .filter_map(|r| {
                    r.observations()
                        .iter()
                        .rev()
                        .find(|o| o.variable == lactate)
                        .map(|o| o.value)
                })
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        assert!(mean_last(true) > mean_last(false) + 0.5);
    }
}
