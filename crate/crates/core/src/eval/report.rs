use std::collections::BTreeMap;

use crate::error::Result;
use crate::eval::protocol::ExperimentReport;

pub const CSV_HEADER: [&str; 6] = ["model", "condition", "auc", "acquired_fraction", "n_patients", "seed"];

/// One CSV row per report.
pub fn report_csv(reports: &[ExperimentReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.model.clone(),
            r.condition.clone(),
            r.auc.to_string(),
            r.acquired_fraction.to_string(),
            r.n_patients.to_string(),
            r.seed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Text table with one row per model and one AUC column per condition.
pub fn report_table(reports: &[ExperimentReport]) -> String {
    let mut rows: BTreeMap<&str, [Option<f64>; 4]> = BTreeMap::new();
    for r in reports {
        let row = rows.entry(r.model.as_str()).or_default();
        match r.condition.as_str() {
            "masked" => row[0] = Some(r.auc),
            "recommended" => {
                row[1] = Some(r.auc);
                row[3] = Some(r.acquired_fraction);
            }
            "full" => row[2] = Some(r.auc),
            _ => {}
        }
    }
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let mut out = format!(
        "{:<12} {:>10} {:>12} {:>10} {:>10}\n",
        "model", "masked", "recommended", "full", "acquired"
    );
    for (model, v) in rows {
        out += &format!(
            "{:<12} {:>10} {:>12} {:>10} {:>10}\n",
            model,
            cell(v[0]),
            cell(v[1]),
            cell(v[2]),
            cell(v[3])
        );
    }
    out
}
