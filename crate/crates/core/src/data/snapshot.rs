use crate::data::record::PatientRecord;
use crate::data::vocabulary::{VariableId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotEntry {
    pub value: f64,
    /// Hours between the observation and the snapshot time.
    pub age: f64,
}

/// Latest non-stale value of every variable at one point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    entries: Vec<Option<SnapshotEntry>>,
}

impl Snapshot {
    pub fn empty(n_variables: usize, time: f64) -> Self {
        Self {
            time,
            entries: vec![None; n_variables],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, v: VariableId) -> Option<SnapshotEntry> {
        self.entries[v]
    }

    pub fn value(&self, v: VariableId) -> Option<f64> {
        self.entries[v].map(|e| e.value)
    }

    pub fn is_observed(&self, v: VariableId) -> bool {
        self.entries[v].is_some()
    }

    pub fn observed_mask(&self) -> Vec<bool> {
        self.entries.iter().map(Option::is_some).collect()
    }

    pub fn observed(&self) -> Vec<VariableId> {
        (0..self.entries.len()).filter(|&v| self.is_observed(v)).collect()
    }

    pub fn missing(&self) -> Vec<VariableId> {
        (0..self.entries.len()).filter(|&v| !self.is_observed(v)).collect()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.entries.iter().all(Option::is_some)
    }

    /// Marks `v` observed right now with `value`.
    pub fn set(&mut self, v: VariableId, value: f64) {
        self.entries[v] = Some(SnapshotEntry { value, age: 0.0 });
    }

    /// Observed values mapped into standardized space.
    pub fn standardized(&self, vocab: &Vocabulary) -> Vec<Option<f64>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(v, e)| e.map(|e| vocab.get(v).standardize(e.value)))
            .collect()
    }
}

/// Builds the snapshot of `record` at hour `t`.
///
/// A variable is present iff its latest observation at or before `t` is no
/// older than the variable's staleness window. Among equal timestamps the
/// last observation in record order wins.
pub fn snapshot_at(record: &PatientRecord, vocab: &Vocabulary, t: f64) -> Snapshot {
    let mut latest: Vec<Option<(f64, f64)>> = vec![None; vocab.len()];
    for obs in record.observations() {
        if obs.time > t {
            break;
        }
        latest[obs.variable] = Some((obs.value, obs.time));
    }
    let entries = latest
        .into_iter()
        .enumerate()
        .map(|(v, slot)| {
            slot.and_then(|(value, time)| {
                let age = t - time;
                (age <= vocab.get(v).staleness_hours).then_some(SnapshotEntry { value, age })
            })
        })
        .collect();
    Snapshot { time: t, entries }
}
