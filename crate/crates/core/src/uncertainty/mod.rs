//! Missing-value model, Monte-Carlo risk estimation and the decision policy.

pub mod engine;
pub mod entropy;
pub mod imputation;
pub mod policy;

pub use engine::{predict_uncertain, Hypothesis, Scenario, UncertainPrediction};
pub use entropy::binary_entropy;
pub use imputation::{fit_imputation, Conditioner, ImputationModel};
pub use policy::{decide, PolicyConfig, PolicyDecision};
