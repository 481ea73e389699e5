//! Sparse n-gram baselines: multinomial naive Bayes, linear SVM and NBSVM.

pub mod features;
pub mod linear;
pub mod mnb;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use features::{ngram_vectorize, tokenize, NGramRange, NGramVocab, SparseVec, Tfidf};
pub use linear::{log_count_ratio, nbsvm_fit, svm_fit, LinearModel, SvmParams};
pub use mnb::{mnb_fit, MnbModel};

use crate::corpus::{Corpus, Polarity, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::train::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mnb,
    Nbsvm,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Uni,
    Unibi,
    /// Unigram counts reweighted by tf-idf.
    Tfidf,
}

macro_rules! named_enum {
    ($ty:ty, $($variant:path => $name:literal),+) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $($variant => $name),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($variant),)+
                    _ => Err(Error::InvalidInput(format!(
                        "unknown {} '{}' (expected one of: {})",
                        stringify!($ty).to_lowercase(),
                        s,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(Method, Method::Mnb => "mnb", Method::Nbsvm => "nbsvm", Method::Svm => "svm");
named_enum!(FeatureKind, FeatureKind::Uni => "uni", FeatureKind::Unibi => "unibi", FeatureKind::Tfidf => "tfidf");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub method: Method,
    pub features: FeatureKind,
    /// Additive smoothing for MNB and the NBSVM count ratios.
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub binarize: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: Method::Mnb,
            features: FeatureKind::Uni,
            alpha: linear::DEFAULT_NB_ALPHA,
            beta: linear::DEFAULT_BETA,
            lambda: linear::DEFAULT_LAMBDA,
            epochs: linear::DEFAULT_EPOCHS,
            seed: 0,
            binarize: true,
        }
    }
}

impl BaselineConfig {
    pub fn svm_params(&self) -> SvmParams {
        SvmParams {
            lambda: self.lambda,
            epochs: self.epochs,
            seed: self.seed,
        }
    }
}

/// Text → sparse features, with the vocabulary and idf frozen from training.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    pub kind: FeatureKind,
    pub vocab: NGramVocab,
    pub tfidf: Option<Tfidf>,
}

impl FeatureExtractor {
    pub fn fit(kind: FeatureKind, train: &Corpus) -> Self {
        let range = match kind {
            FeatureKind::Unibi => NGramRange::UniBigram,
            FeatureKind::Uni | FeatureKind::Tfidf => NGramRange::Unigram,
        };
        let tokens: Vec<Vec<String>> = train.comments.iter().map(|c| tokenize(&c.text)).collect();
        let vocab = NGramVocab::build(tokens.iter().map(|t| t.as_slice()), range);
        let tfidf = (kind == FeatureKind::Tfidf).then(|| {
            let counts: Vec<SparseVec> = tokens.iter().map(|t| ngram_vectorize(t, &vocab)).collect();
            Tfidf::fit(&counts, vocab.len())
        });
        Self { kind, vocab, tfidf }
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn transform(&self, text: &str) -> SparseVec {
        let counts = ngram_vectorize(&tokenize(text), &self.vocab);
        match &self.tfidf {
            Some(t) => t.transform(&counts),
            None => counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Mnb(MnbModel),
    Linear(LinearModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub method: Method,
    pub features: FeatureExtractor,
    pub classifier: Classifier,
}

impl BaselineModel {
    /// Per-class decision scores: log-posteriors for MNB, margins otherwise.
    pub fn scores(&self, text: &str) -> [f64; NUM_CLASSES] {
        let x = self.features.transform(text);
        match &self.classifier {
            Classifier::Mnb(m) => m.predict(&x).1,
            Classifier::Linear(m) => m.scores(&x),
        }
    }

    pub fn predict(&self, text: &str) -> Polarity {
        Polarity::from_index(crate::train::argmax(&self.scores(text))).expect("three classes")
    }
}

/// MNB on tf-idf features always uses the real-valued weights; clipping them
/// to 1 would discard the weighting entirely.
pub fn fit_baseline(config: &BaselineConfig, train: &Corpus) -> Result<BaselineModel> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let features = FeatureExtractor::fit(config.features, train);
    let data: Vec<(SparseVec, Polarity)> = train
        .comments
        .iter()
        .map(|c| (features.transform(&c.text), c.label))
        .collect();
    let dim = features.dim();
    let classifier = match config.method {
        Method::Mnb => {
            let binarize = config.binarize && config.features != FeatureKind::Tfidf;
            Classifier::Mnb(mnb_fit(&data, dim, config.alpha, binarize)?)
        }
        Method::Svm => Classifier::Linear(svm_fit(&data, dim, config.svm_params())?),
        Method::Nbsvm => Classifier::Linear(nbsvm_fit(
            &data,
            dim,
            config.alpha,
            config.beta,
            config.svm_params(),
        )?),
    };
    Ok(BaselineModel {
        method: config.method,
        features,
        classifier,
    })
}

pub fn evaluate_baseline(model: &BaselineModel, corpus: &Corpus) -> Result<Metrics> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("empty evaluation corpus".into()));
    }
    let predicted: Vec<Polarity> = corpus.comments.iter().map(|c| model.predict(&c.text)).collect();
    Metrics::from_predictions(&corpus.labels(), &predicted)
}
