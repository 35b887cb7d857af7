//! Masked / recommended / full evaluation protocol and report tables.

pub mod auc;
pub mod protocol;
pub mod report;

pub use auc::compute_auc;
pub use protocol::{
    run_condition, Acquisition, AcquisitionStrategy, ConditionRegistry, EvalContext, EvalPatient,
    ExperimentReport, PatientOutcome,
};
pub use report::{report_csv, report_table};
