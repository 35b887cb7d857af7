//! Counterfactual uncertainty reduction, lab ranking and risk trajectories.

pub mod counterfactual;
pub mod rank;
pub mod trajectory;

pub use counterfactual::{estimate_on, estimate_reduction, CounterfactualEstimate, HypothesisDraws};
pub use rank::{missing_labs, rank, recommend, recommend_among, Recommendation};
pub use trajectory::{project_trajectory, RiskPoint, RiskTrajectory};
