//! Turning a patient record into the step sequence the recurrent model reads.

use crate::data::{snapshot_at, PatientRecord, VariableId, Vocabulary};

/// Observations closer together than this share a timestep.
pub const BUCKET_HOURS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEntry {
    pub variable: VariableId,
    /// Standardized value.
    pub value: f64,
    /// Hours between the observation and the query time.
    pub age: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub time: f64,
    pub entries: Vec<StepEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub statics: Vec<f64>,
    pub steps: Vec<Step>,
}

/// Observed history up to and including `t`, bucketed into half-hour steps.
///
/// At most `max_steps` of the most recent buckets are kept. Within a bucket
/// a variable appears once, with its latest value.
pub fn history_steps(record: &PatientRecord, vocab: &Vocabulary, t: f64, max_steps: usize) -> Vec<Step> {
    let mut steps: Vec<Step> = Vec::new();
    let mut current_bucket = i64::MIN;
    for obs in record.observations() {
        if obs.time > t {
            break;
        }
        let bucket = (obs.time / BUCKET_HOURS).floor() as i64;
        if bucket != current_bucket {
            steps.push(Step {
                time: bucket as f64 * BUCKET_HOURS,
                entries: Vec::new(),
            });
            current_bucket = bucket;
        }
        let entry = StepEntry {
            variable: obs.variable,
            value: vocab.get(obs.variable).standardize(obs.value),
            age: t - obs.time,
        };
        let step = steps.last_mut().expect("bucket pushed above");
        match step.entries.iter_mut().find(|e| e.variable == obs.variable) {
            Some(slot) => *slot = entry,
            None => step.entries.push(entry),
        }
    }
    if steps.len() > max_steps {
        steps.drain(..steps.len() - max_steps);
    }
    steps
}

/// The step appended at query time: every variable fresh in the snapshot at
/// `t` with its age, followed by `completion` (imputed or hypothesized
/// entries for variables the snapshot lacks).
pub fn query_step(record: &PatientRecord, vocab: &Vocabulary, t: f64, completion: &[StepEntry]) -> Step {
    let snap = snapshot_at(record, vocab, t);
    let mut entries: Vec<StepEntry> = (0..vocab.len())
        .filter_map(|v| {
            snap.entry(v).map(|e| StepEntry {
                variable: v,
                value: vocab.get(v).standardize(e.value),
                age: e.age,
            })
        })
        .collect();
    entries.extend_from_slice(completion);
    Step { time: t, entries }
}

/// Full model input: history capped so that history plus the query step fit
/// in `max_timesteps`.
pub fn build_input(
    record: &PatientRecord,
    vocab: &Vocabulary,
    t: f64,
    max_timesteps: usize,
    completion: &[StepEntry],
) -> ModelInput {
    let mut steps = history_steps(record, vocab, t, max_timesteps.saturating_sub(1));
    steps.push(query_step(record, vocab, t, completion));
    ModelInput {
        statics: record.static_info.features(),
        steps,
    }
}
