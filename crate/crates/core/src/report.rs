//! Run outputs on disk: `metrics.csv`, `summary.json`, `report.json` and
//! `bank_<iter>.json` snapshots.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::experiment::{run_experiment_observed, ExperimentConfig, ExperimentReport, RunError, CSV_HEADER};
use crate::memory_bank::MemoryBank;
use crate::numerics::euclidean_distance;

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    spec_seed: u64,
    evaluations: usize,
    final_metrics: Option<&'a crate::experiment::MetricRow>,
    final_assignment_accuracy: Option<f64>,
    baseline_accuracy: Option<f64>,
    selection_precision: Option<f64>,
    selection_recall: Option<f64>,
    selection_chance_rate: Option<f64>,
    notes: &'a [String],
}

pub fn summary_json(config: &ExperimentConfig, report: &ExperimentReport) -> Value {
    let summary = Summary {
        config,
        spec_seed: report.spec_seed,
        evaluations: report.rows.len(),
        final_metrics: report.final_row.as_ref(),
        final_assignment_accuracy: report.final_assignment_accuracy(),
        baseline_accuracy: report.baseline_accuracy,
        selection_precision: report.selection.precision,
        selection_recall: report.selection.recall,
        selection_chance_rate: report.selection.chance_rate(),
        notes: &report.notes,
    };
    serde_json::to_value(summary).expect("summary is plain data")
}

/// Runs the experiment and writes every output into `out`.
pub fn run_to_dir(config: &ExperimentConfig, out: &Path) -> Result<ExperimentReport, RunError> {
    fs::create_dir_all(out)?;
    let every = config.snapshot_every;
    let report = run_experiment_observed(config, |t, bank| {
        if every > 0 && t % every == 0 {
            fs::write(out.join(format!("bank_{t}.json")), bank.snapshot())?;
        }
        Ok(())
    })?;
    fs::write(out.join("metrics.csv"), report.to_csv())?;
    let summary = serde_json::to_string_pretty(&summary_json(config, &report)).expect("json");
    fs::write(out.join("summary.json"), summary + "\n")?;
    Ok(report)
}

/// Parses `metrics.csv` into JSON rows; empty cells become `null`.
pub fn csv_to_json(text: &str) -> Result<Value, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty metrics file")?;
    if header != CSV_HEADER {
        return Err(format!("unexpected header: {header}"));
    }
    let names: Vec<&str> = header.split(',').collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(format!("row {}: expected {} cells, got {}", n + 1, names.len(), cells.len()));
        }
        let mut row = Map::new();
        for (name, cell) in names.iter().zip(&cells) {
            let value = if cell.is_empty() {
                Value::Null
            } else if *name == "iter" && *cell == "final" {
                json!("final")
            } else {
                let x: f64 = cell
                    .parse()
                    .map_err(|_| format!("row {}: bad number {cell:?} in {name}", n + 1))?;
                json!(x)
            };
            row.insert(name.to_string(), value);
        }
        rows.push(Value::Object(row));
    }
    let final_row = rows.iter().find(|r| r["iter"] == "final").cloned();
    Ok(json!({ "rows": rows, "final": final_row }))
}

/// Re-renders `out/metrics.csv` as `out/report.json`.
pub fn render_report(out: &Path) -> Result<Value, RunError> {
    let text = fs::read_to_string(out.join("metrics.csv"))?;
    let value = csv_to_json(&text).map_err(RunError::Config)?;
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&value).expect("json") + "\n",
    )?;
    Ok(value)
}

/// Human-readable overview of a bank.
pub fn describe_bank(bank: &MemoryBank) -> String {
    let mut out = format!(
        "base classes: {}\ndim: {}\nmomentum: {}\n",
        bank.num_base_classes(),
        bank.dim(),
        bank.momentum()
    );
    for c in 0..bank.num_base_classes() {
        let spread = euclidean_distance(&bank.base_aux_plus()[c], &bank.base_aux_minus()[c]).unwrap_or(f64::NAN);
        out += &format!(
            "class {}: |prototype| {:.4}  aux separation {:.4}  |disparity| {:.4}\n",
            c + 1,
            bank.base_prototypes()[c].norm(),
            spread,
            bank.base_disparity()[c].norm()
        );
    }
    let residual = bank
        .novel_prototype()
        .add(bank.novel_disparity())
        .and_then(|p| euclidean_distance(&p, bank.novel_aux_plus()))
        .unwrap_or(f64::NAN);
    out += &format!(
        "novel: |prototype| {:.4}  |disparity| {:.4}  aux residual {:.3e}\n",
        bank.novel_prototype().norm(),
        bank.novel_disparity().norm(),
        residual
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let text = format!("{CSV_HEADER}\n10,0.5,,0,2,1,0.25,0.1,0.2\nfinal,1,0,,0,,,,\n");
        let v = csv_to_json(&text).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 2);
        assert_eq!(v["rows"][0]["iter"], json!(10.0));
        assert_eq!(v["rows"][0]["novel_recall"], Value::Null);
        assert_eq!(v["final"]["base_accuracy"], json!(1.0));
        assert!(csv_to_json("iter,x\n").is_err());
        assert!(csv_to_json(&format!("{CSV_HEADER}\n1,2\n")).is_err());
    }

    #[test]
    fn describe_mentions_every_class() {
        let bank = MemoryBank::init(3, 4, 1, 0.01).unwrap();
        let text = describe_bank(&bank);
        assert!(text.contains("class 3"));
        assert!(text.contains("aux residual"));
    }
}
