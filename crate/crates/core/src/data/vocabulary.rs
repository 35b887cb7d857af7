use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dense variable index into a [`Vocabulary`].
pub type VariableId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Vital,
    Lab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub id: VariableId,
    pub name: String,
    pub unit: String,
    pub kind: VariableKind,
    pub population_mean: f64,
    pub population_std: f64,
    /// Observations older than this are treated as missing.
    pub staleness_hours: f64,
}

impl VariableSpec {
    pub fn standardize(&self, value: f64) -> f64 {
        (value - self.population_mean) / self.population_std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        self.population_mean + z * self.population_std
    }
}

/// The ordered set of clinical variables a cohort and a model share.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    specs: Vec<VariableSpec>,
    by_name: HashMap<String, VariableId>,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        self.specs.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let specs = Vec::<VariableSpec>::deserialize(de)?;
        Vocabulary::new(specs).map_err(serde::de::Error::custom)
    }
}

pub const VITAL_STALENESS_HOURS: f64 = 8.0;
pub const LAB_STALENESS_HOURS: f64 = 24.0;

impl Vocabulary {
    pub fn new(specs: Vec<VariableSpec>) -> Result<Self> {
        let mut by_name = HashMap::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if spec.id != i {
                return Err(Error::InvalidConfig(format!(
                    "variable ids must be dense 0..V-1; `{}` has id {} at position {i}",
                    spec.name, spec.id
                )));
            }
            if !(spec.population_std > 0.0 && spec.population_std.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "population_std of `{}` must be positive",
                    spec.name
                )));
            }
            if !spec.population_mean.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "population_mean of `{}` must be finite",
                    spec.name
                )));
            }
            if !(spec.staleness_hours > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "staleness_hours of `{}` must be positive",
                    spec.name
                )));
            }
            if by_name.insert(spec.name.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate variable name `{}`",
                    spec.name
                )));
            }
        }
        Ok(Self { specs, by_name })
    }

    /// Six vitals followed by fourteen labs.
    pub fn default_clinical() -> Self {
        use VariableKind::{Lab, Vital};
        let table: [(&str, &str, VariableKind, f64, f64); 20] = [
            ("HR", "bpm", Vital, 85.0, 15.0),
            ("RR", "breaths/min", Vital, 18.0, 4.0),
            ("Temp", "degC", Vital, 37.0, 0.7),
            ("SBP", "mmHg", Vital, 120.0, 18.0),
            ("DBP", "mmHg", Vital, 70.0, 12.0),
            ("SpO2", "%", Vital, 96.0, 2.5),
            ("Lactate", "mmol/L", Lab, 1.8, 1.0),
            ("WBC", "10^9/L", Lab, 9.0, 4.0),
            ("Creatinine", "mg/dL", Lab, 1.1, 0.5),
            ("Bilirubin", "mg/dL", Lab, 0.9, 0.6),
            ("Platelets", "10^9/L", Lab, 230.0, 70.0),
            ("Glucose", "mg/dL", Lab, 120.0, 35.0),
            ("BUN", "mg/dL", Lab, 18.0, 8.0),
            ("Sodium", "mmol/L", Lab, 139.0, 4.0),
            ("Potassium", "mmol/L", Lab, 4.1, 0.5),
            ("Hemoglobin", "g/dL", Lab, 12.0, 1.8),
            ("Bicarbonate", "mmol/L", Lab, 24.0, 3.5),
            ("Chloride", "mmol/L", Lab, 103.0, 4.0),
            ("INR", "ratio", Lab, 1.2, 0.3),
            ("Albumin", "g/dL", Lab, 3.5, 0.6),
        ];
        let specs = table
            .iter()
            .enumerate()
            .map(|(id, &(name, unit, kind, mean, std))| VariableSpec {
                id,
                name: name.to_string(),
                unit: unit.to_string(),
                kind,
                population_mean: mean,
                population_std: std,
                staleness_hours: match kind {
                    Vital => VITAL_STALENESS_HOURS,
                    Lab => LAB_STALENESS_HOURS,
                },
            })
            .collect();
        Self::new(specs).expect("built-in vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[VariableSpec] {
        &self.specs
    }

    pub fn get(&self, id: VariableId) -> &VariableSpec {
        &self.specs[id]
    }

    pub fn id_of(&self, name: &str) -> Option<VariableId> {
        self.by_name.get(name).copied()
    }

    /// Looks up a name, failing with the known vocabulary listed.
    pub fn resolve(&self, name: &str) -> Result<VariableId> {
        self.id_of(name).ok_or_else(|| Error::UnknownVariable {
            name: name.to_string(),
            known: self.names(),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn labs(&self) -> impl Iterator<Item = VariableId> + '_ {
        self.specs
            .iter()
            .filter(|s| s.kind == VariableKind::Lab)
            .map(|s| s.id)
    }

    pub fn is_lab(&self, id: VariableId) -> bool {
        self.specs[id].kind == VariableKind::Lab
    }

    /// Stable content hash used to pair checkpoints with cohorts.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&self.specs).expect("specs serialize");
        let digest = Sha256::digest(&canonical);
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.specs).expect("specs serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let specs: Vec<VariableSpec> = serde_json::from_str(text)?;
        Self::new(specs)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_vocabulary_shape() {
        let v = Vocabulary::default_clinical();
        assert_eq!(v.len(), 20);
        assert_eq!(v.labs().count(), 14);
        assert_eq!(v.id_of("Lactate"), Some(6));
        assert_eq!(v.get(0).staleness_hours, 8.0);
        assert_eq!(v.get(6).staleness_hours, 24.0);
    }

    #[test]
    fn json_round_trip_preserves_hash() {
        let v = Vocabulary::default_clinical();
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.hash(), back.hash());
    }

    #[test]
    fn rejects_non_dense_ids_and_bad_std() {
        let mut specs = Vocabulary::default_clinical().specs().to_vec();
        specs[3].id = 9;
        assert!(Vocabulary::new(specs).is_err());

        let mut specs = Vocabulary::default_clinical().specs().to_vec();
        specs[0].population_std = 0.0;
        assert!(Vocabulary::new(specs).is_err());

        let mut specs = Vocabulary::default_clinical().specs().to_vec();
        specs[1].name = "HR".into();
        assert!(Vocabulary::new(specs).is_err());
    }

    #[test]
    fn unknown_name_lists_vocabulary() {
        let v = Vocabulary::default_clinical();
        let err = v.resolve("XYZ").unwrap_err().to_string();
        assert!(err.contains("XYZ"));
        assert!(err.contains("Lactate"));
    }
}
