use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_predictions(k: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut m = Self::new(k);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.counts[t][p] += 1;
        }
        m
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: usize = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total().max(1) as f64
    }

    pub fn balanced_accuracy(&self) -> Result<f64> {
        balanced_accuracy(&self.counts)
    }
}

/// Mean per-class recall. Classes with no true samples are left out of the
/// mean.
pub fn balanced_accuracy(confusion: &[Vec<usize>]) -> Result<f64> {
    let k = confusion.len();
    if k < 2 || confusion.iter().any(|r| r.len() != k) {
        return Err(Error::invalid("confusion matrix must be square with K >= 2"));
    }
    let recalls: Vec<f64> = confusion
        .iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let support: usize = row.iter().sum();
            (support > 0).then(|| row[i] as f64 / support as f64)
        })
        .collect();
    if recalls.is_empty() {
        return Err(Error::InsufficientData("confusion matrix is empty".into()));
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}
