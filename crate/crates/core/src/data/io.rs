//! On-disk cohort layout.
//!
//! A cohort directory holds `events.csv`, `statics.csv`, an optional
//! `labels.csv` and `vocabulary.json`. Values are written with the shortest
//! representation that parses back to the same `f64`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::record::{Label, Observation, PatientRecord, Sex, StaticInfo};
use crate::data::vocabulary::Vocabulary;
use crate::error::{Error, Result};

pub const EVENTS_FILE: &str = "events.csv";
pub const STATICS_FILE: &str = "statics.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const VOCABULARY_FILE: &str = "vocabulary.json";

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub vocabulary: Vocabulary,
    /// Sorted by `patient_id`.
    pub records: Vec<PatientRecord>,
}

impl Cohort {
    pub fn n_flags(&self) -> usize {
        self.records
            .first()
            .map_or(0, |r| r.static_info.history_flags.len())
    }
}

fn parse_err(file: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path, expected_prefix: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let headers = rdr.headers()?.clone();
    for (i, want) in expected_prefix.iter().enumerate() {
        if headers.get(i) != Some(want) {
            return Err(parse_err(
                path,
                1,
                format!("expected header column {i} to be `{want}`, got {:?}", headers.get(i)),
            ));
        }
    }
    Ok(rdr)
}

fn field<'a>(path: &Path, line: u64, rec: &'a csv::StringRecord, i: usize, name: &str) -> Result<&'a str> {
    rec.get(i)
        .ok_or_else(|| parse_err(path, line, format!("missing column `{name}`")))
}

fn number(path: &Path, line: u64, s: &str, name: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(path, line, format!("`{name}` is not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("`{name}` must be finite: {s:?}")));
    }
    Ok(v)
}

fn flag(path: &Path, line: u64, s: &str, name: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(parse_err(path, line, format!("`{name}` must be 0 or 1, got {s:?}"))),
    }
}

/// Reads a cohort directory. Uses `vocabulary.json` when present, the
/// built-in vocabulary otherwise.
pub fn ingest_cohort(dir: &Path) -> Result<Cohort> {
    let vocab_path = dir.join(VOCABULARY_FILE);
    let vocabulary = if vocab_path.exists() {
        Vocabulary::read(&vocab_path)?
    } else {
        Vocabulary::default_clinical()
    };
    let records = ingest_with(dir, &vocabulary)?;
    Ok(Cohort { vocabulary, records })
}

pub fn ingest_with(dir: &Path, vocab: &Vocabulary) -> Result<Vec<PatientRecord>> {
    let statics = read_statics(&dir.join(STATICS_FILE))?;
    let events = read_events(&dir.join(EVENTS_FILE), vocab)?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        read_labels(&labels_path)?
    } else {
        BTreeMap::new()
    };

    for id in events.keys() {
        if !statics.contains_key(id) {
            return Err(Error::InvalidConfig(format!(
                "patient `{id}` has events but no row in {STATICS_FILE}"
            )));
        }
    }
    for id in labels.keys() {
        if !statics.contains_key(id) {
            return Err(Error::InvalidConfig(format!(
                "patient `{id}` has a label but no row in {STATICS_FILE}"
            )));
        }
    }

    let mut events = events;
    statics
        .into_iter()
        .map(|(id, info)| {
            let obs = events.remove(&id).unwrap_or_default();
            let label = labels.get(&id).copied();
            PatientRecord::new(id, info, obs, label)
        })
        .collect()
}

fn read_events(path: &Path, vocab: &Vocabulary) -> Result<BTreeMap<String, Vec<Observation>>> {
    let mut rdr = reader(path, &["patient_id", "time_hours", "variable", "value"])?;
    let mut out: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 4 {
            return Err(parse_err(path, line, format!("expected 4 columns, found {}", row.len())));
        }
        let id = field(path, line, &row, 0, "patient_id")?;
        let time = number(path, line, field(path, line, &row, 1, "time_hours")?, "time_hours")?;
        if time < 0.0 {
            return Err(parse_err(path, line, "time_hours must be non-negative"));
        }
        let name = field(path, line, &row, 2, "variable")?;
        let variable = vocab.resolve(name)?;
        let value = number(path, line, field(path, line, &row, 3, "value")?, "value")?;
        out.entry(id.to_string())
            .or_default()
            .push(Observation { variable, value, time });
    }
    Ok(out)
}

fn read_statics(path: &Path) -> Result<BTreeMap<String, StaticInfo>> {
    let mut rdr = reader(path, &["patient_id", "age", "sex"])?;
    let headers = rdr.headers()?.clone();
    let n_flags = headers.len() - 3;
    for i in 0..n_flags {
        let want = format!("flag_{i}");
        if headers.get(3 + i) != Some(want.as_str()) {
            return Err(parse_err(path, 1, format!("expected header column `{want}`")));
        }
    }
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 + n_flags {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", 3 + n_flags, row.len()),
            ));
        }
        let id = field(path, line, &row, 0, "patient_id")?.to_string();
        let age = number(path, line, &row[1], "age")?;
        let sex = Sex::parse(&row[2])
            .ok_or_else(|| parse_err(path, line, format!("sex must be F or M, got {:?}", &row[2])))?;
        let history_flags = (0..n_flags)
            .map(|i| flag(path, line, &row[3 + i], "flag"))
            .collect::<Result<Vec<_>>>()?;
        if out
            .insert(id.clone(), StaticInfo { age, sex, history_flags })
            .is_some()
        {
            return Err(parse_err(path, line, format!("duplicate patient `{id}`")));
        }
    }
    Ok(out)
}

fn read_labels(path: &Path) -> Result<BTreeMap<String, Label>> {
    let mut rdr = reader(path, &["patient_id", "label", "label_time_hours"])?;
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 columns, found {}", row.len())));
        }
        let positive = flag(path, line, &row[1], "label")?;
        let time = number(path, line, &row[2], "label_time_hours")?;
        out.insert(row[0].to_string(), Label { positive, time });
    }
    Ok(out)
}

/// Writes a cohort directory, creating it if needed.
pub fn write_cohort(dir: &Path, cohort: &Cohort) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    cohort.vocabulary.write(&dir.join(VOCABULARY_FILE))?;

    let mut events = Buffered::create(dir.join(EVENTS_FILE))?;
    writeln!(events.w, "patient_id,time_hours,variable,value")?;
    for r in &cohort.records {
        for o in r.observations() {
            writeln!(
                events.w,
                "{},{},{},{}",
                r.patient_id,
                o.time,
                cohort.vocabulary.get(o.variable).name,
                o.value
            )?;
        }
    }
    events.finish()?;

    let n_flags = cohort.n_flags();
    let mut statics = Buffered::create(dir.join(STATICS_FILE))?;
    write!(statics.w, "patient_id,age,sex")?;
    for i in 0..n_flags {
        write!(statics.w, ",flag_{i}")?;
    }
    writeln!(statics.w)?;
    for r in &cohort.records {
        let s = &r.static_info;
        if s.history_flags.len() != n_flags {
            return Err(Error::InvalidConfig(format!(
                "patient `{}` has {} history flags, cohort uses {n_flags}",
                r.patient_id,
                s.history_flags.len()
            )));
        }
        write!(statics.w, "{},{},{}", r.patient_id, s.age, s.sex.as_str())?;
        for &f in &s.history_flags {
            write!(statics.w, ",{}", u8::from(f))?;
        }
        writeln!(statics.w)?;
    }
    statics.finish()?;

    if cohort.records.iter().any(|r| r.label.is_some()) {
        let mut labels = Buffered::create(dir.join(LABELS_FILE))?;
        writeln!(labels.w, "patient_id,label,label_time_hours")?;
        for r in &cohort.records {
            if let Some(l) = r.label {
                writeln!(labels.w, "{},{},{}", r.patient_id, u8::from(l.positive), l.time)?;
            }
        }
        labels.finish()?;
    }
    Ok(())
}

struct Buffered {
    w: std::io::BufWriter<File>,
}

impl Buffered {
    fn create(path: PathBuf) -> Result<Self> {
        Ok(Self {
            w: std::io::BufWriter::new(File::create(path)?),
        })
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}
