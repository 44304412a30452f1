//! Text and JSON renderings of metrics reports, plus prediction and curve
//! dumps. Every rendering is built from the same in-memory struct, so the
//! table and the JSON never disagree.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{MetricsReport, PredictionRow, Summary};
use crate::trainer::EpochRecord;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const PREDICTIONS_CSV: &str = "predictions.csv";

fn pm(s: &Summary) -> String {
    format!("{:.3} ± {:.3}", s.mean, s.sd)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.3}"))
}

/// Human-readable table. `±` is the sample standard deviation across runs;
/// a single run renders as `±0.000`.
pub fn render_text(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model:  {}", report.model);
    let _ = writeln!(out, "target: {}", report.target);
    let _ = writeln!(out, "split:  {}", report.split);
    let _ = writeln!(out, "seeds:  {:?}", report.seeds);
    let _ = writeln!(out, "config: {}", report.config_hash);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<6} {:>20}", "metric", "mean ± sd");
    let _ = writeln!(out, "{:<6} {:>20}", "MAE", pm(&report.mae));
    let _ = writeln!(out, "{:<6} {:>20}", "MSE", pm(&report.mse));
    let _ = writeln!(out, "{:<6} {:>20}", "RMSE", pm(&report.rmse));
    let r2 = report.r2.as_ref().map_or_else(|| "undefined".to_owned(), pm);
    let _ = writeln!(out, "{:<6} {:>20}", "R²", r2);
    let p = &report.pooled;
    let _ = writeln!(
        out,
        "pooled: MAE {:.3}  MSE {:.3}  RMSE {:.3}  R² {}",
        p.mae,
        p.mse,
        p.rmse,
        opt(p.r2)
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:>6} {:>5} {:>7} {:>6} {:>9} {:>9} {:>9} {:>9}",
        "seed", "split", "n_train", "n_test", "MAE", "MSE", "RMSE", "R²"
    );
    for r in &report.runs {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{:>6} {:>5} {:>7} {:>6} {:>9.3} {:>9.3} {:>9.3} {:>9}",
            r.seed,
            r.split,
            r.n_train,
            r.n_test,
            m.mae,
            m.mse,
            m.rmse,
            opt(m.r2)
        );
    }
    out
}

pub fn render_json(report: &MetricsReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

pub fn write_predictions(path: &Path, predictions: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in predictions {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in curve {
        w.serialize(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `report.txt` and `predictions.csv` into `dir`.
pub fn emit_report(dir: &Path, report: &MetricsReport, predictions: &[PredictionRow]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(REPORT_JSON), &render_json(report)?)?;
    write_file(&dir.join(REPORT_TEXT), &render_text(report))?;
    write_predictions(&dir.join(PREDICTIONS_CSV), predictions)
}

/// One line of a sweep's aggregate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub cell: String,
    /// Sweep parameter values of this cell, in axis order.
    pub params: Vec<(String, f64)>,
    pub target: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<Summary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

impl AggregateRow {
    pub fn ok(cell: String, params: Vec<(String, f64)>, report: &MetricsReport) -> Self {
        Self {
            cell,
            params,
            target: report.target.clone(),
            status: CellStatus::Ok,
            error: None,
            mae: Some(report.mae),
            mse: Some(report.mse),
            rmse: Some(report.rmse),
            r2: report.r2,
        }
    }

    pub fn failed(cell: String, params: Vec<(String, f64)>, target: &str, error: &Error) -> Self {
        Self {
            cell,
            params,
            target: target.to_owned(),
            status: CellStatus::Failed,
            error: Some(error.to_string()),
            mae: None,
            mse: None,
            rmse: None,
            r2: None,
        }
    }
}

fn pm4(s: &Option<Summary>) -> String {
    s.as_ref()
        .map_or_else(|| "-".to_owned(), |s| format!("{:.4} ± {:.4}", s.mean, s.sd))
}

pub fn render_aggregate_text(rows: &[AggregateRow]) -> String {
    let axes: Vec<&str> = rows
        .first()
        .map(|r| r.params.iter().map(|(n, _)| n.as_str()).collect())
        .unwrap_or_default();
    let tw = rows
        .iter()
        .map(|r| r.target.chars().count())
        .chain([6])
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    for a in &axes {
        let _ = write!(out, "{a:>12} ");
    }
    let _ = writeln!(
        out,
        "{:<tw$} {:<7} {:>17} {:>17} {:>17} {:>17}",
        "target", "status", "MAE", "MSE", "RMSE", "R²"
    );
    for r in rows {
        for (_, v) in &r.params {
            let _ = write!(out, "{v:>12} ");
        }
        let status = match r.status {
            CellStatus::Ok => "ok",
            CellStatus::Failed => "failed",
        };
        let _ = write!(
            out,
            "{:<tw$} {:<7} {:>17} {:>17} {:>17} {:>17}",
            r.target,
            status,
            pm4(&r.mae),
            pm4(&r.mse),
            pm4(&r.rmse),
            pm4(&r.r2)
        );
        if let Some(e) = &r.error {
            let _ = write!(out, "  {e}");
        }
        let _ = writeln!(out);
    }
    out
}

/// Writes `aggregate.json` and `aggregate.txt` into `dir`.
pub fn emit_aggregate(dir: &Path, rows: &[AggregateRow]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(
        &dir.join("aggregate.json"),
        &(serde_json::to_string_pretty(rows)? + "\n"),
    )?;
    write_file(&dir.join("aggregate.txt"), &render_aggregate_text(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{RunMetrics, RunSummary};
    use crate::features::SplitSpec;

    fn report(n_runs: usize) -> MetricsReport {
        let runs: Vec<RunSummary> = (0..n_runs)
            .map(|i| RunSummary {
                seed: i as u64,
                split: 0,
                n_train: 7,
                n_test: 3,
                metrics: RunMetrics::compute(&[1.0, 2.0, 3.0], &[1.5, 2.0, 2.0 + i as f64 * 0.1]).unwrap(),
                best_epoch: None,
                epochs_run: None,
            })
            .collect();
        let preds = vec![
            PredictionRow {
                seed: 0,
                split: 0,
                row: 0,
                y_true: 1.0,
                y_pred: 1.25
            };
            2
        ];
        let preds = [
            preds,
            vec![PredictionRow {
                seed: 0,
                split: 0,
                row: 1,
                y_true: 2.0,
                y_pred: 2.0,
            }],
        ]
        .concat();
        let seeds: Vec<u64> = (0..n_runs as u64).collect();
        MetricsReport::from_runs(
            "ridge",
            "y",
            SplitSpec::Ratio(0.7),
            &seeds,
            "0".repeat(16),
            runs,
            &preds,
        )
        .unwrap()
    }

    #[test]
    fn single_run_renders_zero_spread() {
        let text = render_text(&report(1));
        assert!(text.contains("± 0.000"), "{text}");
    }

    #[test]
    fn json_round_trips() {
        let r = report(3);
        let back: MetricsReport = serde_json::from_str(&render_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn text_carries_every_json_aggregate() {
        let r = report(3);
        let text = render_text(&r);
        for s in [r.mae, r.mse, r.rmse, r.r2.unwrap()] {
            assert!(text.contains(&format!("{:.3} ± {:.3}", s.mean, s.sd)), "{text}");
        }
    }
}
