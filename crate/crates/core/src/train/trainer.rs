use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adamax::{adamax_step, AdamaxState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_LEARNING_RATE};
use super::metrics::{argmax, Metrics};
use crate::corpus::{encode_sentence, CharVocab, Corpus, EncodedSentence, Polarity, SplitSet};
use crate::error::{Error, Result};
use crate::nn::{self, ArchitectureKind, ModelConfig, ModelParams};
use crate::rng::Xoshiro256StarStar;

const EVAL_CHUNK: usize = 256;
const SHUFFLE_STREAM: u64 = 0x5EED_0F_BA7C;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub arch: ArchitectureKind,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub embedding_dim: usize,
    pub filters: usize,
    pub kernel_width: usize,
    pub pool_size: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub peephole: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: ArchitectureKind::Subword,
            batch_size: 128,
            max_epochs: 50,
            patience: 5,
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            seed: 0,
            embedding_dim: 64,
            filters: 128,
            kernel_width: 3,
            pool_size: 2,
            hidden: 128,
            max_len: crate::corpus::DEFAULT_MAX_LEN,
            peephole: true,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            arch: self.arch,
            vocab_size,
            embedding_dim: self.embedding_dim,
            filters: self.filters,
            kernel_width: self.kernel_width,
            pool_size: self.pool_size,
            hidden: self.hidden,
            max_len: self.max_len,
            peephole: self.peephole,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidInput("max_epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidInput(
                "learning_rate must be positive and betas in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Loss of the very first mini-batch, before any update.
    pub first_batch_loss: Option<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
            )
            .expect("write to String");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch.checked_sub(1)?).map(|e| e.val_loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
}

pub fn encode_corpus(corpus: &Corpus, vocab: &CharVocab, max_len: usize) -> Result<(Vec<EncodedSentence>, Vec<usize>)> {
    let mut encoded = Vec::with_capacity(corpus.len());
    let mut labels = Vec::with_capacity(corpus.len());
    for c in &corpus.comments {
        encoded.push(encode_sentence(&c.text, vocab, max_len)?);
        labels.push(c.label.index());
    }
    Ok((encoded, labels))
}

/// Mean loss and predicted classes, processed in fixed-size chunks.
pub fn score_encoded(params: &ModelParams, encoded: &[EncodedSentence], labels: &[usize]) -> Result<(f64, Vec<usize>)> {
    let mut total = 0.0;
    let mut predicted = Vec::with_capacity(encoded.len());
    for (xs, ys) in encoded.chunks(EVAL_CHUNK).zip(labels.chunks(EVAL_CHUNK)) {
        let logits = nn::infer(params, xs)?;
        let (loss, probs) = nn::softmax_xent(&logits, ys)?;
        total += loss * xs.len() as f64;
        for r in 0..xs.len() {
            predicted.push(argmax(probs.row(r)));
        }
    }
    Ok((total / encoded.len() as f64, predicted))
}

fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// Trains with shuffled mini-batches and keeps the parameters of the epoch
/// with the lowest validation loss.
pub fn train_model(config: &TrainConfig, splits: &SplitSet, vocab: &CharVocab) -> Result<TrainOutcome> {
    train_model_with(config, splits, vocab, |_| {})
}

/// [`train_model`] with a callback after every completed epoch.
pub fn train_model_with(
    config: &TrainConfig,
    splits: &SplitSet,
    vocab: &CharVocab,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if splits.train.is_empty() || splits.validation.is_empty() {
        return Err(Error::InvalidInput(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let model_config = config.model_config(vocab.size());
    let (train_x, train_y) = encode_corpus(&splits.train, vocab, config.max_len)?;
    let (val_x, val_y) = encode_corpus(&splits.validation, vocab, config.max_len)?;

    let mut params = ModelParams::init(&model_config, config.seed)?;
    let mut optimizer = AdamaxState::for_model(&params, config.learning_rate, config.beta1, config.beta2);
    let mut rng = Xoshiro256StarStar::derive(config.seed, SHUFFLE_STREAM);

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale_epochs = 0;
    let mut order: Vec<usize> = (0..train_x.len()).collect();

    for epoch in 1..=config.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let xs: Vec<EncodedSentence> = chunk.iter().map(|&i| train_x[i].clone()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let (loss, probs, grads) = nn::loss_and_grads(&params, &xs, &ys)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            if history.first_batch_loss.is_none() {
                history.first_batch_loss = Some(loss);
            }
            loss_sum += loss * xs.len() as f64;
            hits += (0..xs.len()).filter(|&r| argmax(probs.row(r)) == ys[r]).count();
            adamax_step(&mut params, &grads, &mut optimizer)?;
        }
        let (val_loss, val_pred) = score_encoded(&params, &val_x, &val_y)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_x.len() as f64,
            train_acc: hits as f64 / train_x.len() as f64,
            val_loss,
            val_acc: accuracy(&val_pred, &val_y),
        };
        on_epoch(&record);
        history.epochs.push(record);

        let improved = best.as_ref().is_none_or(|(l, _)| val_loss < *l);
        if improved {
            best = Some((val_loss, params.clone()));
            history.best_epoch = epoch;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= config.patience {
                break;
            }
        }
    }
    let (_, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { params, history })
}

/// Scores a trained network on a labeled corpus.
pub fn evaluate(params: &ModelParams, corpus: &Corpus, vocab: &CharVocab) -> Result<Metrics> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty corpus".into()));
    }
    let (xs, ys) = encode_corpus(corpus, vocab, params.config.max_len)?;
    let (_, predicted) = score_encoded(params, &xs, &ys)?;
    let predicted: Vec<Polarity> = predicted
        .into_iter()
        .map(|i| Polarity::from_index(i).expect("three-way head"))
        .collect();
    Metrics::from_predictions(&corpus.labels(), &predicted)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: Polarity,
    pub probabilities: [f64; 3],
}

pub fn predict(params: &ModelParams, text: &str, vocab: &CharVocab) -> Result<Prediction> {
    let encoded = encode_sentence(text, vocab, params.config.max_len)?;
    let logits = nn::infer(params, &[encoded])?;
    let (_, probs) = nn::softmax_xent(&logits, &[0])?;
    let mut probabilities = [0.0; 3];
    probabilities.copy_from_slice(probs.row(0));
    Ok(Prediction {
        label: Polarity::from_index(argmax(&probabilities)).expect("three-way head"),
        probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_char_vocab, split_corpus, LabeledComment};

    fn small_config() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            max_epochs: 4,
            patience: 1,
            embedding_dim: 4,
            filters: 4,
            hidden: 4,
            max_len: 16,
            ..TrainConfig::default()
        }
    }

    fn toy_splits() -> SplitSet {
        let words = [("acha", Polarity::Positive), ("bura", Polarity::Negative), ("kuch", Polarity::Neutral)];
        let comments = (0..60)
            .map(|i| {
                let (w, l) = words[i % 3];
                LabeledComment::new(format!("yeh {w} hai {i}"), l).unwrap()
            })
            .collect();
        split_corpus(&Corpus::new(comments, "toy"), 1).unwrap()
    }

    #[test]
    fn history_and_early_stopping_invariants() {
        let splits = toy_splits();
        let vocab = build_char_vocab(&splits.train).unwrap();
        let config = small_config();
        let out = train_model(&config, &splits, &vocab).unwrap();
        let h = &out.history;
        assert!(!h.epochs.is_empty() && h.epochs.len() <= config.max_epochs);
        let best = h.best_val_loss().unwrap();
        assert!(h.epochs.iter().all(|e| best <= e.val_loss));
        let (val_x, val_y) = encode_corpus(&splits.validation, &vocab, config.max_len).unwrap();
        let (loss, _) = score_encoded(&out.params, &val_x, &val_y).unwrap();
        assert_eq!(loss, best);
        assert!(h.to_csv().starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n"));
        assert_eq!(h.to_csv().lines().count(), h.epochs.len() + 1);
    }

    #[test]
    fn long_patience_runs_every_epoch() {
        let splits = toy_splits();
        let vocab = build_char_vocab(&splits.train).unwrap();
        let config = TrainConfig {
            max_epochs: 3,
            patience: 10,
            ..small_config()
        };
        let out = train_model(&config, &splits, &vocab).unwrap();
        assert_eq!(out.history.epochs.len(), 3);
    }

    #[test]
    fn deterministic() {
        let splits = toy_splits();
        let vocab = build_char_vocab(&splits.train).unwrap();
        let a = train_model(&small_config(), &splits, &vocab).unwrap();
        let b = train_model(&small_config(), &splits, &vocab).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_validation() {
        let mut splits = toy_splits();
        let vocab = build_char_vocab(&splits.train).unwrap();
        splits.validation.comments.clear();
        assert!(train_model(&small_config(), &splits, &vocab).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..small_config()
        };
        assert!(train_model(&bad, &toy_splits(), &vocab).is_err());
    }

    #[test]
    fn zero_model_prediction() {
        let vocab = CharVocab::from_chars("bhai".chars()).unwrap();
        let config = small_config().model_config(vocab.size());
        let params = ModelParams::zeros(&config).unwrap();
        let p = predict(&params, "Bhai", &vocab).unwrap();
        assert_eq!(p.label, Polarity::Negative);
        assert!(p.probabilities.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(predict(&params, "", &vocab).is_err());
    }

    #[test]
    fn prediction_ignores_case() {
        let vocab = CharVocab::from_chars("bhai".chars()).unwrap();
        let params = ModelParams::init(&small_config().model_config(vocab.size()), 4).unwrap();
        let a = predict(&params, "Bhai", &vocab).unwrap();
        let b = predict(&params, "bhai", &vocab).unwrap();
        assert_eq!(a, b);
        assert!((a.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"batch_size": 4, "dropout": 0.5}"#).unwrap_err();
        assert!(err.to_string().contains("dropout"));
        let cfg: TrainConfig = serde_json::from_str(r#"{"batch_size": 4}"#).unwrap();
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.max_epochs, 50);
    }
}
