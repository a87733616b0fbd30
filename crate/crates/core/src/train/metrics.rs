use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][pred]` counts.
    pub confusion: Vec<Vec<u64>>,
    /// Confusion rows divided by their support; all-zero rows stay zero.
    pub confusion_rownorm: Vec<Vec<f64>>,
}

/// Classification metrics for `preds` against `labels` over `n_classes`.
///
/// Precision, recall and F1 of a class are 0 when undefined (no predictions,
/// no support, or both zero). The weighted F1 weights each class's F1 by its
/// share of the true labels.
pub fn compute_metrics(labels: &[usize], preds: &[usize], n_classes: usize) -> Result<Metrics> {
    if labels.len() != preds.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyMask("evaluation"));
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&y, &p) in labels.iter().zip(preds) {
        if y >= n_classes || p >= n_classes {
            return Err(Error::DimensionMismatch(format!(
                "label {y} / prediction {p} outside {n_classes} classes"
            )));
        }
        confusion[y][p] += 1;
    }
    let total = labels.len() as f64;
    let mut per_class = Vec::with_capacity(n_classes);
    let mut weighted_f1 = 0.0;
    let mut correct = 0u64;
    for c in 0..n_classes {
        let tp = confusion[c][c];
        correct += tp;
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        let precision = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
        let recall = if support > 0 { tp as f64 / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        weighted_f1 += f1 * support as f64 / total;
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support,
        });
    }
    let confusion_rownorm = confusion
        .iter()
        .map(|row| {
            let s: u64 = row.iter().sum();
            row.iter()
                .map(|&v| if s > 0 { v as f64 / s as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(Metrics {
        weighted_f1,
        accuracy: correct as f64 / total,
        per_class,
        confusion,
        confusion_rownorm,
    })
}

/// Confusion matrix as CSV: a header row of class names, then one row per
/// true class led by its name.
pub fn confusion_csv(metrics: &Metrics, class_names: &[String]) -> String {
    let mut out = String::from("true\\pred");
    for name in class_names {
        out.push(',');
        out.push_str(&csv_field(name));
    }
    out.push('\n');
    for (name, row) in class_names.iter().zip(&metrics.confusion) {
        out.push_str(&csv_field(name));
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
