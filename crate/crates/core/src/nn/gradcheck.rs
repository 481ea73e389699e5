//! Central finite-difference verification of [`backward`](super::backward).

use serde::Serialize;

use super::model::{forward, loss_and_grads};
use super::layers::softmax_xent;
use super::params::{ModelConfig, ModelParams};
use crate::corpus::{EncodedSentence, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;

/// Models above this size take too long to check element by element.
pub const MAX_CHECK_PARAMS: usize = 5_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub elements: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub epsilon: f64,
    pub loss: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_relative_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Random parameters in `[-0.5, 0.5)` for every tensor, biases and the padding
/// row included, so no ReLU sits exactly on its kink.
pub fn random_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config)?;
    let mut rng = Xoshiro256StarStar::derive(seed, 0x6C4E);
    for (_, t) in params.named_tensors_mut() {
        for v in t.data_mut() {
            *v = rng.uniform(-0.5, 0.5);
        }
    }
    Ok(params)
}

/// A small labeled batch of padded sentences with varying true lengths.
pub fn random_batch(config: &ModelConfig, seed: u64, size: usize) -> (Vec<EncodedSentence>, Vec<usize>) {
    let mut rng = Xoshiro256StarStar::derive(seed, 0xBA7C);
    let min_len = config.kernel_width.min(config.max_len).max(1);
    let mut batch = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for _ in 0..size {
        let len = min_len + rng.below(config.max_len - min_len + 1);
        let mut indices: Vec<usize> = (0..len)
            .map(|_| 1 + rng.below(config.vocab_size - 1))
            .collect();
        indices.resize(config.max_len, 0);
        batch.push(EncodedSentence {
            indices,
            true_length: len,
        });
        labels.push(rng.below(NUM_CLASSES));
    }
    (batch, labels)
}

fn batch_loss(params: &ModelParams, batch: &[EncodedSentence], labels: &[usize]) -> Result<f64> {
    let (logits, _) = forward(params, batch)?;
    Ok(softmax_xent(&logits, labels)?.0)
}

/// Compares analytic and finite-difference gradients on every element of
/// every parameter tensor.
pub fn grad_check(config: &ModelConfig, seed: u64, epsilon: f64) -> Result<GradCheckReport> {
    let names: Vec<String> = config.manifest().into_iter().map(|(n, _)| n).collect();
    grad_check_tensors(config, seed, epsilon, &names)
}

/// Like [`grad_check`], restricted to the named tensors.
pub fn grad_check_tensors(
    config: &ModelConfig,
    seed: u64,
    epsilon: f64,
    names: &[String],
) -> Result<GradCheckReport> {
    if config.parameter_count() > MAX_CHECK_PARAMS {
        return Err(Error::InvalidInput(format!(
            "model has {} parameters; gradient checks are limited to {MAX_CHECK_PARAMS}",
            config.parameter_count()
        )));
    }
    let params = random_params(config, seed)?;
    let (batch, labels) = random_batch(config, seed, 3);
    let (loss, _, grads) = loss_and_grads(&params, &batch, &labels)?;
    let analytic: Vec<(String, Vec<f64>)> = grads
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();

    let mut tensors = Vec::new();
    for (ti, (name, g)) in analytic.iter().enumerate() {
        if !names.contains(name) {
            continue;
        }
        let mut worst: f64 = 0.0;
        for e in 0..g.len() {
            let mut probe = params.clone();
            let nudge = |p: &mut ModelParams, delta: f64| {
                p.named_tensors_mut()[ti].1.data_mut()[e] += delta;
            };
            nudge(&mut probe, epsilon);
            let up = batch_loss(&probe, &batch, &labels)?;
            nudge(&mut probe, -2.0 * epsilon);
            let down = batch_loss(&probe, &batch, &labels)?;
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(g[e], numeric));
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            elements: g.len(),
            max_relative_error: worst,
        });
    }
    Ok(GradCheckReport {
        seed,
        epsilon,
        loss,
        tensors,
    })
}
