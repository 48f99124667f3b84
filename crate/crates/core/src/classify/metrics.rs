use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<u8>,
    pub accuracy: f64,
    /// `confusion[true][predicted]`, indexed like `classes`.
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// Classes whose precision was 0/0 (never predicted).
    pub precision_degenerate: Vec<bool>,
    /// Classes whose recall was 0/0 (absent from the test set).
    pub recall_degenerate: Vec<bool>,
    pub train_time_s: f64,
    pub subset_size: usize,
}

/// Per-class precision and recall from a confusion matrix, with 0/0 mapped
/// to 0 and flagged: `(precision, recall, precision_degenerate, recall_degenerate)`.
pub fn precision_recall(confusion: &[Vec<usize>]) -> (Vec<f64>, Vec<f64>, Vec<bool>, Vec<bool>) {
    let c = confusion.len();
    let mut out = (vec![0.0; c], vec![0.0; c], vec![false; c], vec![false; c]);
    for k in 0..c {
        let tp = confusion[k][k];
        let predicted: usize = confusion.iter().map(|row| row[k]).sum();
        let actual: usize = confusion[k].iter().sum();
        if predicted == 0 {
            out.2[k] = true;
        } else {
            out.0[k] = tp as f64 / predicted as f64;
        }
        if actual == 0 {
            out.3[k] = true;
        } else {
            out.1[k] = tp as f64 / actual as f64;
        }
    }
    out
}

impl EvalReport {
    pub fn from_confusion(
        classes: Vec<u8>,
        confusion: Vec<Vec<usize>>,
        train_time_s: f64,
        subset_size: usize,
    ) -> Result<Self> {
        let c = classes.len();
        if confusion.len() != c || confusion.iter().any(|r| r.len() != c) {
            return Err(Error::Shape(format!("confusion matrix must be {c}x{c}")));
        }
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
        let accuracy = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        };
        let (precision, recall, precision_degenerate, recall_degenerate) =
            precision_recall(&confusion);
        Ok(Self {
            classes,
            accuracy,
            confusion,
            precision,
            recall,
            precision_degenerate,
            recall_degenerate,
            train_time_s,
            subset_size,
        })
    }

    pub fn from_predictions(
        classes: &[u8],
        truth: &[u8],
        predicted: &[u8],
        train_time_s: f64,
        subset_size: usize,
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let index = |l: u8| {
            classes.iter().position(|&c| c == l).ok_or_else(|| {
                Error::Shape(format!(
                    "label {l} is not among the model classes {classes:?}"
                ))
            })
        };
        let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[index(t)?][index(p)?] += 1;
        }
        Self::from_confusion(classes.to_vec(), confusion, train_time_s, subset_size)
    }

    pub fn n_test(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// `true\predicted` header row of class ids, then one row per true class.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(&c.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
