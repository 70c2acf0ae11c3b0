//! Evaluation metrics: accuracy, per-class F1, support-weighted F1, and the
//! report files they are published in.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use emofusion_model::dialog::{DialogFeatures, DialogModel};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub per_class_f1: Vec<f64>,
    /// `confusion[truth][prediction]` counts.
    pub confusion: Vec<Vec<usize>>,
    /// Row sums of the confusion matrix.
    pub support: Vec<usize>,
    pub total: usize,
}

/// Scores predictions against ground truth over a fixed class set.
pub fn evaluate(truth: &[usize], pred: &[usize], classes: usize) -> Result<MetricsReport, HarnessError> {
    if truth.is_empty() {
        return Err(HarnessError::validation("cannot evaluate an empty dataset"));
    }
    if truth.len() != pred.len() {
        return Err(HarnessError::validation(format!(
            "{} labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if classes == 0 {
        return Err(HarnessError::validation("class count must be positive"));
    }

    let mut confusion = vec![vec![0usize; classes]; classes];
    for (i, (&t, &p)) in truth.iter().zip(pred).enumerate() {
        if t >= classes || p >= classes {
            return Err(HarnessError::validation(format!(
                "pair {i}: label {t} / prediction {p} outside [0, {classes})"
            )));
        }
        confusion[t][p] += 1;
    }

    let total = truth.len();
    let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();

    let mut per_class_f1 = Vec::with_capacity(classes);
    let mut weighted_f1 = 0.0;
    for c in 0..classes {
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..classes).map(|t| confusion[t][c]).sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if support[c] == 0 { 0.0 } else { tp / support[c] as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class_f1.push(f1);
        weighted_f1 += support[c] as f64 / total as f64 * f1;
    }

    Ok(MetricsReport {
        accuracy: correct as f64 / total as f64,
        weighted_f1,
        per_class_f1,
        confusion,
        support,
        total,
    })
}

/// Runs the model over every dialog and scores the pooled utterances.
pub fn evaluate_model(
    model: &DialogModel,
    dialogs: &[DialogFeatures],
) -> Result<MetricsReport, HarnessError> {
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for d in dialogs {
        truth.extend_from_slice(d.labels());
        pred.extend(model.predict(d));
    }
    evaluate(&truth, &pred, model.config().n_classes)
}

pub fn save_metrics(path: &Path, report: &MetricsReport) -> Result<(), HarnessError> {
    let bytes = serde_json::to_vec(report)
        .map_err(|e| HarnessError::validation(format!("encoding metrics: {e}")))?;
    fs::write(path, bytes)
        .map_err(|e| HarnessError::io(format!("writing metrics {}", path.display()), e))
}

pub fn load_metrics(path: &Path) -> Result<MetricsReport, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::io(format!("reading metrics {}", path.display()), e))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::validation(format!("metrics {}: {e}", path.display())))
}

/// Writes `summary.txt`, `confusion.csv` and `per_class_f1.csv` into `dir`.
/// Floats are printed in full round-trip precision so downstream checks can
/// recompute them exactly.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)
        .map_err(|e| HarnessError::io(format!("creating report dir {}", dir.display()), e))?;
    let classes = report.per_class_f1.len();

    let mut summary = String::new();
    let _ = writeln!(summary, "utterances: {}", report.total);
    let _ = writeln!(summary, "accuracy: {}", report.accuracy);
    let _ = writeln!(summary, "weighted_f1: {}", report.weighted_f1);
    let _ = writeln!(summary);
    let _ = writeln!(summary, "class support f1");
    for c in 0..classes {
        let _ = writeln!(summary, "{c} {} {}", report.support[c], report.per_class_f1[c]);
    }
    write_file(&dir.join("summary.txt"), &summary)?;

    let mut confusion = String::from("truth\\pred");
    for c in 0..classes {
        let _ = write!(confusion, ",{c}");
    }
    confusion.push('\n');
    for (t, row) in report.confusion.iter().enumerate() {
        let _ = write!(confusion, "{t}");
        for count in row {
            let _ = write!(confusion, ",{count}");
        }
        confusion.push('\n');
    }
    write_file(&dir.join("confusion.csv"), &confusion)?;

    let mut table = String::from("class,support,f1\n");
    for c in 0..classes {
        let _ = writeln!(table, "{c},{},{}", report.support[c], report.per_class_f1[c]);
    }
    write_file(&dir.join("per_class_f1.csv"), &table)?;
    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<(), HarnessError> {
    fs::write(path, content)
        .map_err(|e| HarnessError::io(format!("writing {}", path.display()), e))
}

/// Parses a confusion matrix written by [`emit_report`].
pub fn read_confusion_csv(path: &Path) -> Result<Vec<Vec<usize>>, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut cells = line.split(',');
        let _row_label = cells.next();
        let row: Result<Vec<usize>, _> = cells.map(str::parse).collect();
        rows.push(row.map_err(|e| {
            HarnessError::validation(format!("{} line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(rows)
}
