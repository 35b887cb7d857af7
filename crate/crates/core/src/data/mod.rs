//! Clinical data types, cohort files and the synthetic generator.

pub mod generator;
pub mod io;
pub mod record;
pub mod snapshot;
pub mod vocabulary;

pub use generator::{generate_cohort, GeneratorConfig};
pub use io::{ingest_cohort, write_cohort, Cohort};
pub use record::{Label, Observation, PatientRecord, Sex, StaticInfo};
pub use snapshot::{snapshot_at, Snapshot, SnapshotEntry};
pub use vocabulary::{VariableId, VariableKind, VariableSpec, Vocabulary};
