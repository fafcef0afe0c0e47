//! Per-class and support-weighted classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Metrics of one evaluation run. `confusion[gold][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Support-weighted means of the per-class values. The F1 entry is the
    /// mean of per-class F1, so it can fall outside the P-R interval.
    pub weighted: Averages,
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion_matrix(gold: &[usize], predicted: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    if gold.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} gold labels vs {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    let mut m = vec![vec![0; num_classes]; num_classes];
    for (&g, &p) in gold.iter().zip(predicted) {
        for c in [g, p] {
            if c >= num_classes {
                return Err(Error::Index {
                    what: "classes",
                    index: c,
                    size: num_classes,
                });
            }
        }
        m[g][p] += 1;
    }
    Ok(m)
}

impl EvalReport {
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<Self> {
        let c = confusion.len();
        if confusion.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("confusion matrix must be square".into()));
        }
        let examples: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
        let per_class: Vec<ClassMetrics> = (0..c)
            .map(|i| {
                let support: usize = confusion[i].iter().sum();
                let predicted: usize = confusion.iter().map(|row| row[i]).sum();
                let precision = ratio(confusion[i][i], predicted);
                let recall = ratio(confusion[i][i], support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let wmean = |f: fn(&ClassMetrics) -> f64| {
            if examples == 0 {
                0.0
            } else {
                per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / examples as f64
            }
        };
        let weighted = Averages {
            precision: wmean(|m| m.precision),
            recall: wmean(|m| m.recall),
            f1: wmean(|m| m.f1),
        };
        Ok(Self {
            examples,
            accuracy: ratio(correct, examples),
            per_class,
            weighted,
            confusion,
        })
    }

    pub fn from_predictions(gold: &[usize], predicted: &[usize], num_classes: usize) -> Result<Self> {
        Self::from_confusion(confusion_matrix(gold, predicted, num_classes)?)
    }
}
