use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::engine::UncertainPrediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Sepsis flag threshold on the mean probability.
    pub th_s: f64,
    /// Lab-request threshold on the entropy (nats).
    pub th_e: f64,
    pub horizon_hours: f64,
    /// Monte-Carlo draws per prediction.
    pub mcs_samples: usize,
    /// Hypothetical draws per counterfactual estimate.
    pub counterfactual_samples: usize,
    pub seed: u64,
    pub top_k: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            th_s: 0.5,
            th_e: 0.25,
            horizon_hours: 4.0,
            mcs_samples: 100,
            counterfactual_samples: 500,
            seed: 0,
            top_k: 5,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.th_s > 0.0 && self.th_s < 1.0) {
            return Err(Error::InvalidConfig(format!("th_s must lie in (0, 1), got {}", self.th_s)));
        }
        if !(self.th_e > 0.0 && self.th_e < std::f64::consts::LN_2) {
            return Err(Error::InvalidConfig(format!("th_e must lie in (0, ln 2), got {}", self.th_e)));
        }
        if self.mcs_samples == 0 || self.counterfactual_samples == 0 {
            return Err(Error::InvalidConfig("sample counts must be at least 1".into()));
        }
        if !(self.horizon_hours >= 0.0) {
            return Err(Error::InvalidConfig("horizon_hours must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub flag_sepsis: bool,
    pub request_labs: bool,
}

/// Both comparisons are strict.
pub fn decide(pred: &UncertainPrediction, config: &PolicyConfig) -> PolicyDecision {
    PolicyDecision {
        flag_sepsis: pred.p_mean > config.th_s,
        request_labs: pred.entropy > config.th_e,
    }
}
