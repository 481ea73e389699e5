use serde::{Deserialize, Serialize};

use crate::corpus::{Polarity, NUM_CLASSES};
use crate::error::{Error, Result};

/// Classification quality over one evaluation set. `confusion[truth][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: [f64; NUM_CLASSES],
    pub recall: [f64; NUM_CLASSES],
    pub f1: [f64; NUM_CLASSES],
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub support: [usize; NUM_CLASSES],
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_confusion(confusion: [[usize; NUM_CLASSES]; NUM_CLASSES]) -> Result<Self> {
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::InvalidInput("no predictions to score".into()));
        }
        let mut precision = [0.0; NUM_CLASSES];
        let mut recall = [0.0; NUM_CLASSES];
        let mut f1 = [0.0; NUM_CLASSES];
        let mut support = [0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            let tp = confusion[c][c];
            let predicted: usize = (0..NUM_CLASSES).map(|t| confusion[t][c]).sum();
            support[c] = confusion[c].iter().sum();
            precision[c] = ratio(tp, predicted);
            recall[c] = ratio(tp, support[c]);
            let denom = precision[c] + recall[c];
            f1[c] = if denom == 0.0 {
                0.0
            } else {
                2.0 * precision[c] * recall[c] / denom
            };
        }
        let trace: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
        let macro_f1 = f1.iter().sum::<f64>() / NUM_CLASSES as f64;
        let weighted_f1 = f1
            .iter()
            .zip(&support)
            .map(|(f, &s)| f * s as f64)
            .sum::<f64>()
            / total as f64;
        Ok(Self {
            accuracy: trace as f64 / total as f64,
            precision,
            recall,
            f1,
            macro_f1,
            weighted_f1,
            support,
            confusion,
        })
    }

    pub fn from_predictions(truth: &[Polarity], predicted: &[Polarity]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
        for (t, p) in truth.iter().zip(predicted) {
            confusion[t.index()][p.index()] += 1;
        }
        Self::from_confusion(confusion)
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
