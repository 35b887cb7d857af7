//! Sepsis risk prediction with Monte-Carlo uncertainty over missing
//! measurements and counterfactual lab-test recommendation.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod predictor;
pub mod recommender;
pub mod rng;
pub mod uncertainty;

pub use error::{Error, Result};
