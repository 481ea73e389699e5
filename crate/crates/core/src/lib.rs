//! Sentiment classification for noisy romanized code-mixed text.
//!
//! The main model is a Subword-LSTM: character embeddings, a 1-D convolution
//! that learns morpheme-like segments, max-pooling, an LSTM over the pooled
//! sequence, and a softmax head. A Char-LSTM ablation drops the convolution
//! and pooling. Everything is trained from scratch in `f64` with Adamax.
//!
//! Classical sparse baselines (multinomial naive Bayes, NBSVM, linear SVM),
//! evaluation metrics, checkpointing and convolution-response export round out
//! the toolkit.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod nn;
pub mod rng;
pub mod synthetic;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
