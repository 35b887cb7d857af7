//! Recurrent risk model, its training loop and the logistic baseline.

pub mod gradcheck;
pub mod input;
pub mod logistic;
pub mod lstm;
pub mod math;
pub mod model;
pub mod train;

pub use gradcheck::{gradient_check, GradientCheck};
pub use input::{build_input, history_steps, query_step, ModelInput, Step, StepEntry};
pub use logistic::LogisticModel;
pub use lstm::{ForwardTrace, LstmParams, LstmShape, PrefixState};
pub use model::{LstmModel, ModelRegistry, PreparedQuery, RiskModel};
pub use train::{split_indices, train, EpochStats, ModelSize, Optimizer, Split, TrainConfig, TrainReport};
