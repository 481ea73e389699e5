//! One-vs-rest linear classifiers: a hinge-loss SVM and NBSVM.

use serde::{Deserialize, Serialize};

use super::features::SparseVec;
use crate::corpus::{Polarity, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;
use crate::train::argmax;

pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_BETA: f64 = 0.25;
pub const DEFAULT_NB_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
        }
    }
}

/// Per-class weight rows and biases. NBSVM models also carry the per-class
/// log-count ratios applied to binarized inputs before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<Vec<f64>>,
    pub bias: [f64; NUM_CLASSES],
    pub ratios: Option<Vec<Vec<f64>>>,
    pub params: SvmParams,
}

impl LinearModel {
    pub fn scores(&self, x: &SparseVec) -> [f64; NUM_CLASSES] {
        let mut out = [0.0; NUM_CLASSES];
        for (c, o) in out.iter_mut().enumerate() {
            let xc = match &self.ratios {
                Some(r) => x.binarized().scaled_by(&r[c]),
                None => x.clone(),
            };
            *o = xc.dot(&self.weights[c]) + self.bias[c];
        }
        out
    }

    /// Highest score wins; ties go to the lowest class index.
    pub fn predict(&self, x: &SparseVec) -> Polarity {
        Polarity::from_index(argmax(&self.scores(x))).expect("three classes")
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }
}

/// Minimizes `λ/2 ‖w‖² + mean hinge(y (w·x + b))` by stochastic subgradient
/// steps of size `1/(λt)`, visiting examples in a seeded order each epoch. The
/// bias is trained as the weight of a constant feature.
pub fn train_binary_hinge(xs: &[SparseVec], ys: &[f64], dim: usize, params: SvmParams, stream: u64) -> (Vec<f64>, f64) {
    let mut rng = Xoshiro256StarStar::derive(params.seed, stream);
    // w = scale * v keeps the shrink step O(1)
    let mut v = vec![0.0; dim];
    let mut v_bias = 0.0;
    let mut scale = 1.0;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut t = 0u64;
    for _ in 0..params.epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (params.lambda * t as f64);
            let margin = ys[i] * scale * (xs[i].dot(&v) + v_bias);
            let shrink = 1.0 - eta * params.lambda;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                v_bias = 0.0;
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let step = eta * ys[i] / scale;
                for &(j, x) in xs[i].entries() {
                    v[j] += step * x;
                }
                v_bias += step;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                v_bias *= scale;
                scale = 1.0;
            }
        }
    }
    (v.into_iter().map(|w| w * scale).collect(), v_bias * scale)
}

fn check_train(train: &[(SparseVec, Polarity)]) -> Result<()> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    Ok(())
}

fn one_vs_rest_targets(train: &[(SparseVec, Polarity)], class: usize) -> Vec<f64> {
    train
        .iter()
        .map(|(_, y)| if y.index() == class { 1.0 } else { -1.0 })
        .collect()
}

pub fn svm_fit(train: &[(SparseVec, Polarity)], dim: usize, params: SvmParams) -> Result<LinearModel> {
    check_train(train)?;
    let xs: Vec<SparseVec> = train.iter().map(|(x, _)| x.clone()).collect();
    let mut weights = Vec::with_capacity(NUM_CLASSES);
    let mut bias = [0.0; NUM_CLASSES];
    for (c, b) in bias.iter_mut().enumerate() {
        let ys = one_vs_rest_targets(train, c);
        let (w, wb) = train_binary_hinge(&xs, &ys, dim, params, c as u64);
        weights.push(w);
        *b = wb;
    }
    Ok(LinearModel {
        weights,
        bias,
        ratios: None,
        params,
    })
}

/// `r = ln((p / ‖p‖₁) / (q / ‖q‖₁))` with `p = α + Σ_{y=c} x̂` and
/// `q = α + Σ_{y≠c} x̂` over binarized inputs.
pub fn log_count_ratio(train: &[(SparseVec, Polarity)], dim: usize, class: Polarity, alpha: f64) -> Vec<f64> {
    let mut p = vec![alpha; dim];
    let mut q = vec![alpha; dim];
    for (x, y) in train {
        let target = if *y == class { &mut p } else { &mut q };
        for &(i, v) in x.binarized().entries() {
            target[i] += v;
        }
    }
    let (np, nq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    p.iter()
        .zip(&q)
        .map(|(pi, qi)| ((pi / np) / (qi / nq)).ln())
        .collect()
}

/// `w' = (1 − β) w̄ + β w`, with `w̄` the mean absolute weight.
pub fn interpolate(weights: &[f64], beta: f64) -> Vec<f64> {
    let mean_abs = weights.iter().map(|w| w.abs()).sum::<f64>() / weights.len().max(1) as f64;
    weights
        .iter()
        .map(|w| (1.0 - beta) * mean_abs + beta * w)
        .collect()
}

pub fn nbsvm_fit(train: &[(SparseVec, Polarity)], dim: usize, alpha: f64, beta: f64, params: SvmParams) -> Result<LinearModel> {
    check_train(train)?;
    for class in Polarity::ALL {
        if !train.iter().any(|(_, y)| *y == class) {
            return Err(Error::InvalidInput(format!(
                "class '{class}' has no training examples"
            )));
        }
    }
    let mut weights = Vec::with_capacity(NUM_CLASSES);
    let mut ratios = Vec::with_capacity(NUM_CLASSES);
    let mut bias = [0.0; NUM_CLASSES];
    for class in Polarity::ALL {
        let c = class.index();
        let r = log_count_ratio(train, dim, class, alpha);
        let xs: Vec<SparseVec> = train.iter().map(|(x, _)| x.binarized().scaled_by(&r)).collect();
        let ys = one_vs_rest_targets(train, c);
        let (w, b) = train_binary_hinge(&xs, &ys, dim, params, c as u64);
        weights.push(interpolate(&w, beta));
        ratios.push(r);
        bias[c] = b;
    }
    Ok(LinearModel {
        weights,
        bias,
        ratios: Some(ratios),
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Polarity::*;

    fn sv(pairs: &[(usize, f64)]) -> SparseVec {
        SparseVec::from_pairs(pairs.to_vec()).unwrap()
    }

    #[test]
    fn hand_log_count_ratio() {
        let train = [(sv(&[(0, 1.0)]), Positive), (sv(&[(1, 1.0)]), Negative)];
        let r = log_count_ratio(&train, 2, Positive, 1.0);
        assert!((r[0] - 2f64.ln()).abs() < 1e-15);
        assert!((r[1] + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn interpolation_identities() {
        let w = [0.5, -2.0, 1.5, 0.0];
        assert_eq!(interpolate(&w, 1.0), w.to_vec());
        let flat = interpolate(&w, 0.0);
        assert!(flat.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn separable_pair() {
        let train = [(sv(&[(0, 1.0)]), Positive), (sv(&[(0, -1.0)]), Negative)];
        let m = svm_fit(&train, 1, SvmParams::default()).unwrap();
        for (x, y) in &train {
            assert_eq!(m.predict(x), *y);
        }
    }

    /// With identical inputs every class score is a single scalar z; brute
    /// force the hinge objective over z for each one-vs-rest problem.
    fn brute_force_scores(labels: &[Polarity], lambda: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, s) in out.iter_mut().enumerate() {
            let objective = |z: f64| {
                let hinge: f64 = labels
                    .iter()
                    .map(|y| {
                        let t = if y.index() == c { 1.0 } else { -1.0 };
                        (1.0 - t * z).max(0.0)
                    })
                    .sum::<f64>()
                    / labels.len() as f64;
                // minimum-norm (w, b) with w·(1, 2) + b = z
                hinge + lambda / 2.0 * z * z / 6.0
            };
            let mut best = (f64::INFINITY, 0.0);
            for k in -3000..=3000 {
                let z = k as f64 / 1000.0;
                let o = objective(z);
                if o < best.0 {
                    best = (o, z);
                }
            }
            *s = best.1;
        }
        out
    }

    #[test]
    fn identical_inputs_predict_majority() {
        let labels = [Positive, Positive, Positive, Neutral, Negative];
        let x = sv(&[(0, 1.0), (1, 2.0)]);
        let train: Vec<_> = labels.iter().map(|&y| (x.clone(), y)).collect();

        let params = SvmParams::default();
        let oracle = Polarity::from_index(argmax(&brute_force_scores(&labels, params.lambda))).unwrap();
        assert_eq!(oracle, Positive);
        assert_eq!(svm_fit(&train, 2, params).unwrap().predict(&x), oracle);

        let params = SvmParams {
            lambda: 0.01,
            epochs: 2000,
            seed: 0,
        };
        let expected = brute_force_scores(&labels, params.lambda);
        let scores = svm_fit(&train, 2, params).unwrap().scores(&x);
        for c in 0..3 {
            assert!((scores[c] - expected[c]).abs() < 0.1, "{scores:?} vs {expected:?}");
        }
    }

    #[test]
    fn tie_goes_to_lowest_class() {
        let m = LinearModel {
            weights: vec![vec![0.0]; 3],
            bias: [0.0; 3],
            ratios: None,
            params: SvmParams::default(),
        };
        assert_eq!(m.predict(&sv(&[(0, 1.0)])), Negative);
    }

    #[test]
    fn nbsvm_requires_every_class() {
        let train = [(sv(&[(0, 1.0)]), Positive), (sv(&[(1, 1.0)]), Negative)];
        assert!(nbsvm_fit(&train, 2, 1.0, 0.25, SvmParams::default()).is_err());
        assert!(svm_fit(&[], 2, SvmParams::default()).is_err());
    }

    #[test]
    fn nbsvm_beta_one_is_plain_svm_on_scaled_features() {
        let train = [
            (sv(&[(0, 2.0), (2, 1.0)]), Positive),
            (sv(&[(1, 1.0)]), Negative),
            (sv(&[(2, 1.0), (3, 1.0)]), Neutral),
            (sv(&[(0, 1.0)]), Positive),
        ];
        let params = SvmParams::default();
        let m = nbsvm_fit(&train, 4, 1.0, 1.0, params).unwrap();
        for class in Polarity::ALL {
            let c = class.index();
            let r = log_count_ratio(&train, 4, class, 1.0);
            let xs: Vec<_> = train.iter().map(|(x, _)| x.binarized().scaled_by(&r)).collect();
            let ys = one_vs_rest_targets(&train, c);
            let (w, b) = train_binary_hinge(&xs, &ys, 4, params, c as u64);
            assert_eq!(m.weights[c], w);
            assert_eq!(m.bias[c], b);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let train = [
            (sv(&[(0, 1.0)]), Positive),
            (sv(&[(1, 1.0)]), Negative),
            (sv(&[(2, 1.0)]), Neutral),
            (sv(&[(0, 1.0), (2, 1.0)]), Neutral),
        ];
        let p = SvmParams { seed: 9, ..SvmParams::default() };
        assert_eq!(svm_fit(&train, 3, p).unwrap(), svm_fit(&train, 3, p).unwrap());
        assert_eq!(
            nbsvm_fit(&train, 3, 1.0, 0.25, p).unwrap(),
            nbsvm_fit(&train, 3, 1.0, 0.25, p).unwrap()
        );
    }
}
