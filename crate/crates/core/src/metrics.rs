//! Classification evaluation: confusion matrices, per-class
//! precision/recall/F1 and macro averages.
//!
//! A metric whose denominator is zero is reported as 0 and the class is
//! flagged as degenerate.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MetricsError {
    LengthMismatch { truth: usize, predictions: usize },
    IndexOutOfRange { index: usize, classes: usize },
    NoClasses,
    ClassNames { expected: usize, actual: usize },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::LengthMismatch { truth, predictions } => write!(
                f,
                "{truth} ground-truth labels but {predictions} predictions"
            ),
            MetricsError::IndexOutOfRange { index, classes } => {
                write!(f, "class index {index} out of range for {classes} classes")
            }
            MetricsError::NoClasses => f.write_str("confusion matrix needs at least one class"),
            MetricsError::ClassNames { expected, actual } => {
                write!(f, "expected {expected} class names, got {actual}")
            }
        }
    }
}

impl core::error::Error for MetricsError {}

/// `K x K` counts; rows are ground truth, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(class_names: &[&str]) -> Result<Self, MetricsError> {
        if class_names.is_empty() {
            return Err(MetricsError::NoClasses);
        }
        let k = class_names.len();
        Ok(ConfusionMatrix {
            classes: class_names.iter().map(|s| s.to_string()).collect(),
            counts: vec![0; k * k],
        })
    }

    /// Builds a matrix from raw counts, row-major.
    pub fn from_counts(class_names: &[&str], rows: &[Vec<u64>]) -> Result<Self, MetricsError> {
        let mut m = ConfusionMatrix::zeros(class_names)?;
        let k = m.num_classes();
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(MetricsError::ClassNames {
                expected: k,
                actual: rows.len(),
            });
        }
        m.counts = rows.iter().flatten().copied().collect();
        Ok(m)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes() + predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<(), MetricsError> {
        let k = self.num_classes();
        for index in [truth, predicted] {
            if index >= k {
                return Err(MetricsError::IndexOutOfRange { index, classes: k });
            }
        }
        self.counts[truth * k + predicted] += 1;
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.num_classes())
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.rows().nth(class).map_or(0, |r| r.iter().sum())
    }

    pub fn column_sum(&self, class: usize) -> u64 {
        self.rows().map(|r| r[class]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|c| self.get(c, c)).sum()
    }

    /// Fraction of correct predictions, `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }
}

/// Confusion matrix of `K` unnamed classes (named `"0"`, `"1"`, ...).
pub fn confusion(truth: &[usize], predictions: &[usize], k: usize) -> Result<ConfusionMatrix, MetricsError> {
    let names: Vec<String> = (0..k).map(|i| i.to_string()).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    confusion_named(truth, predictions, &refs)
}

pub fn confusion_named(
    truth: &[usize],
    predictions: &[usize],
    class_names: &[&str],
) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            predictions: predictions.len(),
        });
    }
    let mut m = ConfusionMatrix::zeros(class_names)?;
    for (&t, &p) in truth.iter().zip(predictions) {
        m.record(t, p)?;
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when precision or recall had a zero denominator.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub classes: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub total: u64,
    pub accuracy: Option<f64>,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn report(matrix: &ConfusionMatrix) -> ClassReport {
    let k = matrix.num_classes();
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            (0.0, true)
        } else {
            (num as f64 / den as f64, false)
        }
    };
    let classes: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let hits = matrix.get(c, c);
            let support = matrix.row_sum(c);
            let (precision, p_degenerate) = ratio(hits, matrix.column_sum(c));
            let (recall, r_degenerate) = ratio(hits, support);
            ClassMetrics {
                name: matrix.class_names()[c].clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
                degenerate: p_degenerate || r_degenerate,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| classes.iter().map(f).sum::<f64>() / k as f64;
    ClassReport {
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        total: matrix.total(),
        accuracy: matrix.accuracy(),
        classes,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowFractions {
    pub rows: Vec<Vec<f64>>,
    /// Classes with no ground-truth samples; their rows stay zero.
    pub empty_rows: Vec<usize>,
}

/// Divides each row by its sum.
pub fn row_normalize(matrix: &ConfusionMatrix) -> RowFractions {
    let mut empty_rows = Vec::new();
    let rows = matrix
        .rows()
        .enumerate()
        .map(|(i, row)| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                empty_rows.push(i);
                vec![0.0; row.len()]
            } else {
                row.iter().map(|&v| v as f64 / sum as f64).collect()
            }
        })
        .collect();
    RowFractions { rows, empty_rows }
}

/// Plain-text table with one block per classifier: Classifier, Classes,
/// Precision, Recall, F1, Support, closed by a macro-average row.
pub fn render_table(reports: &[(&str, &ClassReport)]) -> String {
    let mut out = String::new();
    let name_w = reports
        .iter()
        .map(|(n, _)| n.len())
        .chain(["Classifier".len()])
        .max()
        .unwrap_or(10);
    let class_w = reports
        .iter()
        .flat_map(|(_, r)| r.classes.iter().map(|c| c.name.len()))
        .chain(["macro-avg".len()])
        .max()
        .unwrap_or(9);
    let rule = "-".repeat(name_w + class_w + 4 * 11 + 4);
    let _ = writeln!(
        out,
        "{:<name_w$}  {:<class_w$}  {:>9}  {:>9}  {:>9}  {:>9}",
        "Classifier", "Classes", "Precision", "Recall", "F1", "Support"
    );
    let _ = writeln!(out, "{rule}");
    for (title, r) in reports {
        for (i, c) in r.classes.iter().enumerate() {
            let label = if i == 0 { *title } else { "" };
            let flag = if c.degenerate { "*" } else { "" };
            let _ = writeln!(
                out,
                "{:<name_w$}  {:<class_w$}  {:>9.2}  {:>9.2}  {:>9.2}  {:>9}{flag}",
                label, c.name, c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(
            out,
            "{:<name_w$}  {:<class_w$}  {:>9.2}  {:>9.2}  {:>9.2}  {:>9}",
            "", "macro-avg", r.macro_precision, r.macro_recall, r.macro_f1, r.total
        );
        let _ = writeln!(out, "{rule}");
    }
    if reports.iter().any(|(_, r)| r.classes.iter().any(|c| c.degenerate)) {
        out.push_str("* zero denominator; metric reported as 0\n");
    }
    out
}
