use super::features::SparseVec;
use crate::corpus::{Polarity, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::train::argmax;

/// Multinomial naive Bayes with additive smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct MnbModel {
    /// `ln(N_c / N)`; `-inf` for classes absent from training.
    pub log_priors: [f64; NUM_CLASSES],
    /// `[class][feature]`
    pub log_likelihoods: Vec<Vec<f64>>,
    pub alpha: f64,
    pub binarize: bool,
}

pub fn mnb_fit(train: &[(SparseVec, Polarity)], dim: usize, alpha: f64, binarize: bool) -> Result<MnbModel> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput("alpha must be positive".into()));
    }
    let mut docs = [0usize; NUM_CLASSES];
    let mut counts = vec![vec![0.0; dim]; NUM_CLASSES];
    for (x, y) in train {
        docs[y.index()] += 1;
        let x = if binarize { x.binarized() } else { x.clone() };
        for &(i, v) in x.entries() {
            counts[y.index()][i] += v;
        }
    }
    let n = train.len() as f64;
    let log_priors = docs.map(|d| (d as f64 / n).ln());
    let log_likelihoods = counts
        .into_iter()
        .map(|row| {
            let denom = (row.iter().sum::<f64>() + alpha * dim as f64).ln();
            row.into_iter().map(|c| (c + alpha).ln() - denom).collect()
        })
        .collect();
    Ok(MnbModel {
        log_priors,
        log_likelihoods,
        alpha,
        binarize,
    })
}

impl MnbModel {
    /// Unnormalized joint log-probabilities `ln P(c) + Σ x_w ln P(w|c)`.
    pub fn joint_log_scores(&self, x: &SparseVec) -> [f64; NUM_CLASSES] {
        let x = if self.binarize { x.binarized() } else { x.clone() };
        let mut scores = self.log_priors;
        for (c, s) in scores.iter_mut().enumerate() {
            if s.is_finite() {
                *s += x.dot(&self.log_likelihoods[c]);
            }
        }
        scores
    }

    pub fn predict(&self, x: &SparseVec) -> (Polarity, [f64; NUM_CLASSES]) {
        let scores = self.joint_log_scores(x);
        let label = Polarity::from_index(argmax(&scores)).expect("three classes");
        (label, normalize_log(scores))
    }
}

/// Log-softmax; `-inf` entries stay `-inf`.
pub(crate) fn normalize_log(scores: [f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.map(|s| s - log_z)
}
