//! The offline subcommands: cohort generation, training and evaluation.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use sepsislab::checkpoint::Checkpoint;
use sepsislab::data::io::ingest_with;
use sepsislab::data::{generate_cohort, ingest_cohort, write_cohort, GeneratorConfig, PatientRecord};
use sepsislab::eval::{report_csv, report_table, run_condition, ConditionRegistry, EvalContext, ExperimentReport};
use sepsislab::predictor::train::labelled;
use sepsislab::predictor::{split_indices, train, LogisticModel, ModelRegistry, RiskModel, TrainConfig};
use sepsislab::uncertainty::{fit_imputation, PolicyConfig};

pub fn generate(seed: u64, patients: usize, config: &GeneratorConfig, out: &Path) -> anyhow::Result<()> {
    let cohort = generate_cohort(seed, patients, config)?;
    write_cohort(out, &cohort)?;
    let positives = cohort.records.iter().filter(|r| r.label.is_some_and(|l| l.positive)).count();
    log::info!("wrote {patients} patients ({positives} positive) to {}", out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Logistic,
}

/// Trains on the train split, fits the imputation model on the same
/// patients and records the test split as the evaluation holdout.
pub fn train_checkpoint(
    data: &Path,
    kind: ModelKind,
    config: &TrainConfig,
    l2: f64,
) -> anyhow::Result<Checkpoint> {
    let cohort = ingest_cohort(data)?;
    let vocab = &cohort.vocabulary;
    let labels = labelled(&cohort.records)?;
    let split = split_indices(&labels, config.split_fractions, config.seed);
    let pick = |idx: &[usize]| -> Vec<PatientRecord> { idx.iter().map(|&i| cohort.records[i].clone()).collect() };
    let train_set = pick(&split.train);
    let imputation = fit_imputation(&train_set, vocab)?;
    let (model, report): (Box<dyn RiskModel>, _) = match kind {
        ModelKind::Lstm => {
            let (m, r) = train(&cohort.records, vocab, config)?;
            (Box::new(m), Some(r))
        }
        ModelKind::Logistic => (Box::new(LogisticModel::fit_records(&train_set, vocab, l2)?), None),
    };
    let mut ck = Checkpoint::new(model.as_ref(), imputation, vocab)?;
    ck.holdout = split.test.iter().map(|&i| cohort.records[i].patient_id.clone()).collect();
    ck.holdout.sort();
    ck.train_report = report;
    Ok(ck)
}

/// Checkpoint holdout patients found in the cohort, or every patient when
/// none are.
pub fn eval_records(ck_holdout: &[String], records: Vec<PatientRecord>) -> Vec<PatientRecord> {
    let held: Vec<PatientRecord> = records
        .iter()
        .filter(|r| ck_holdout.binary_search(&r.patient_id).is_ok())
        .cloned()
        .collect();
    if held.is_empty() {
        records
    } else {
        held
    }
}

pub fn evaluate(
    model_path: &Path,
    cohort: &Path,
    condition: &str,
    budget: f64,
    policy: PolicyConfig,
    limit: Option<usize>,
) -> anyhow::Result<ExperimentReport> {
    let ck = Checkpoint::read(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let vocab = ck.vocabulary.clone();
    let loaded = ck.load(&vocab, &ModelRegistry::default())?;
    let mut holdout = loaded.holdout.clone();
    holdout.sort();
    let mut records = eval_records(&holdout, ingest_with(cohort, &vocab)?);
    if let Some(n) = limit {
        records.truncate(n);
    }
    if records.is_empty() {
        bail!("no patients to evaluate in {}", cohort.display());
    }
    let registry = ConditionRegistry::default();
    let ctx = EvalContext {
        model: loaded.model.as_ref(),
        imputation: &loaded.imputation,
        vocab: &vocab,
        policy,
        budget,
    };
    Ok(run_condition(registry.get(condition)?, &ctx, &records)?)
}

/// Appends the report rows to `out`, writing the header only into a new
/// or empty file.
pub fn append_report(out: &Path, reports: &[ExperimentReport]) -> anyhow::Result<()> {
    let text = report_csv(reports)?;
    let fresh = std::fs::metadata(out).map(|m| m.len() == 0).unwrap_or(true);
    let body = if fresh { &text[..] } else { text.split_once('\n').map_or("", |(_, rest)| rest) };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(out)?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

pub fn print_report(reports: &[ExperimentReport]) {
    print!("{}", report_table(reports));
}
