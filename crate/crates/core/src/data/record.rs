use serde::{Deserialize, Serialize};

use crate::data::vocabulary::VariableId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub variable: VariableId,
    pub value: f64,
    /// Hours since admission.
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "F")]
    Female,
    #[serde(rename = "M")]
    Male,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "F" | "f" => Some(Sex::Female),
            "M" | "m" => Some(Sex::Male),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticInfo {
    pub age: f64,
    pub sex: Sex,
    /// Comorbidity flags; fixed length across a cohort.
    pub history_flags: Vec<bool>,
}

impl StaticInfo {
    /// Feature vector fed to the hidden-state initializer.
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 + self.history_flags.len());
        out.push((self.age - 60.0) / 15.0);
        out.push(if self.sex == Sex::Male { 1.0 } else { 0.0 });
        out.extend(self.history_flags.iter().map(|&f| if f { 1.0 } else { 0.0 }));
        out
    }

    pub fn feature_len(n_flags: usize) -> usize {
        2 + n_flags
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    /// Sepsis onset within the prediction horizon after `time`.
    pub positive: bool,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub static_info: StaticInfo,
    observations: Vec<Observation>,
    pub label: Option<Label>,
}

impl PatientRecord {
    pub fn new(
        patient_id: impl Into<String>,
        static_info: StaticInfo,
        mut observations: Vec<Observation>,
        label: Option<Label>,
    ) -> Result<Self> {
        for o in &observations {
            if !(o.time >= 0.0) || !o.time.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "observation time {} must be a non-negative finite number",
                    o.time
                )));
            }
            if !o.value.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "observation value {} must be finite",
                    o.value
                )));
            }
        }
        sort_observations(&mut observations);
        Ok(Self {
            patient_id: patient_id.into(),
            static_info,
            observations,
            label,
        })
    }

    /// Time-ordered, ties ordered by variable id then insertion.
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn push_observation(&mut self, obs: Observation) -> Result<()> {
        if !(obs.time >= 0.0) || !obs.time.is_finite() || !obs.value.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "invalid observation at time {} with value {}",
                obs.time, obs.value
            )));
        }
        self.observations.push(obs);
        sort_observations(&mut self.observations);
        Ok(())
    }

    /// Keeps only observations matching `keep`.
    pub fn retain_observations(&mut self, keep: impl FnMut(&Observation) -> bool) {
        self.observations.retain(keep);
    }

    pub fn last_time(&self) -> Option<f64> {
        self.observations.last().map(|o| o.time)
    }
}

fn sort_observations(obs: &mut [Observation]) {
    obs.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then_with(|| a.variable.cmp(&b.variable))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn statics() -> StaticInfo {
        StaticInfo {
            age: 70.0,
            sex: Sex::Female,
            history_flags: vec![true, false],
        }
    }

    #[test]
    fn observations_sorted_stably() {
        let obs = vec![
            Observation { variable: 3, value: 1.0, time: 2.0 },
            Observation { variable: 1, value: 2.0, time: 2.0 },
            Observation { variable: 1, value: 3.0, time: 2.0 },
            Observation { variable: 0, value: 4.0, time: 1.0 },
        ];
        let r = PatientRecord::new("p", statics(), obs, None).unwrap();
        let got: Vec<_> = r.observations().iter().map(|o| o.value).collect();
        assert_eq!(got, vec![4.0, 2.0, 3.0, 1.0]);
    }

    #[test]
    fn rejects_negative_time_and_nan() {
        let bad = vec![Observation { variable: 0, value: 1.0, time: -1.0 }];
        assert!(PatientRecord::new("p", statics(), bad, None).is_err());
        let bad = vec![Observation { variable: 0, value: f64::NAN, time: 1.0 }];
        assert!(PatientRecord::new("p", statics(), bad, None).is_err());
    }

    #[test]
    fn static_features_layout() {
        assert_eq!(statics().features(), vec![2.0 / 3.0, 0.0, 1.0, 0.0]);
    }
}
