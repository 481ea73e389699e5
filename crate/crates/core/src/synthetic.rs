//! Planted-morpheme sentiment corpus.
//!
//! Sentences are random lowercase filler words. Positive sentences carry one
//! positive morpheme, negative ones a negative morpheme, neutral ones neither.
//! A planted morpheme is misspelt with a fixed probability by swapping,
//! repeating or dropping one character.

use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabeledComment, Polarity};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;

pub const POSITIVE_MORPHEMES: [&str; 2] = ["acha", "badhiya"];
pub const NEGATIVE_MORPHEMES: [&str; 2] = ["bura", "bkwas"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub sentences: usize,
    pub perturb_prob: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            sentences: 2000,
            perturb_prob: 0.3,
            min_words: 3,
            max_words: 7,
            min_word_len: 2,
            max_word_len: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSentence {
    pub text: String,
    pub label: Polarity,
    /// Character range of the planted (possibly misspelt) morpheme.
    pub span: Option<Range<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    Swap,
    Repeat,
    Drop,
}

/// Applies `kind` at character `at`; swaps exchange `at` and `at + 1`.
pub fn perturb_at(word: &str, kind: Perturbation, at: usize) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    match kind {
        Perturbation::Swap => chars.swap(at, at + 1),
        Perturbation::Repeat => chars.insert(at, chars[at]),
        Perturbation::Drop => {
            chars.remove(at);
        }
    }
    chars.into_iter().collect()
}

fn random_perturbation(word: &str, rng: &mut Xoshiro256StarStar) -> String {
    let n = word.chars().count();
    match rng.below(3) {
        0 => perturb_at(word, Perturbation::Swap, rng.below(n - 1)),
        1 => perturb_at(word, Perturbation::Repeat, rng.below(n)),
        _ => perturb_at(word, Perturbation::Drop, rng.below(n)),
    }
}

/// Every morpheme and every single-edit variant of it.
pub fn morpheme_variants() -> HashSet<String> {
    let mut out = HashSet::new();
    for m in POSITIVE_MORPHEMES.iter().chain(&NEGATIVE_MORPHEMES) {
        let n = m.chars().count();
        out.insert(m.to_string());
        for at in 0..n {
            if at + 1 < n {
                out.insert(perturb_at(m, Perturbation::Swap, at));
            }
            out.insert(perturb_at(m, Perturbation::Repeat, at));
            out.insert(perturb_at(m, Perturbation::Drop, at));
        }
    }
    out
}

fn random_word(config: &SyntheticConfig, rng: &mut Xoshiro256StarStar, forbidden: &HashSet<String>) -> String {
    let span = config.max_word_len - config.min_word_len + 1;
    loop {
        let len = config.min_word_len + rng.below(span);
        let word: String = (0..len).map(|_| (b'a' + rng.below(26) as u8) as char).collect();
        if !forbidden.iter().any(|f| word.contains(f.as_str())) {
            return word;
        }
    }
}

pub fn generate(config: &SyntheticConfig) -> Result<Vec<PlantedSentence>> {
    if config.min_words == 0 || config.min_words > config.max_words {
        return Err(Error::InvalidInput("need 1 <= min_words <= max_words".into()));
    }
    if config.min_word_len == 0 || config.min_word_len > config.max_word_len {
        return Err(Error::InvalidInput("need 1 <= min_word_len <= max_word_len".into()));
    }
    if !(0.0..=1.0).contains(&config.perturb_prob) {
        return Err(Error::InvalidInput("perturb_prob must lie in [0, 1]".into()));
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(config.seed);
    let forbidden = morpheme_variants();
    let mut labels: Vec<Polarity> = (0..config.sentences)
        .map(|i| Polarity::ALL[i % Polarity::ALL.len()])
        .collect();
    rng.shuffle(&mut labels);

    let word_span = config.max_words - config.min_words + 1;
    let mut out = Vec::with_capacity(config.sentences);
    for label in labels {
        let n = config.min_words + rng.below(word_span);
        let mut words: Vec<String> = (0..n).map(|_| random_word(config, &mut rng, &forbidden)).collect();
        let morphemes = match label {
            Polarity::Positive => Some(&POSITIVE_MORPHEMES),
            Polarity::Negative => Some(&NEGATIVE_MORPHEMES),
            Polarity::Neutral => None,
        };
        let mut planted_at = None;
        if let Some(choices) = morphemes {
            let mut m = choices[rng.below(2)].to_string();
            if rng.bernoulli(config.perturb_prob) {
                m = random_perturbation(&m, &mut rng);
            }
            let at = rng.below(n + 1);
            words.insert(at, m);
            planted_at = Some(at);
        }
        let span = planted_at.map(|at| {
            let start: usize = words[..at].iter().map(|w| w.chars().count() + 1).sum();
            start..start + words[at].chars().count()
        });
        out.push(PlantedSentence {
            text: words.join(" "),
            label,
            span,
        });
    }
    Ok(out)
}

pub fn to_corpus(sentences: &[PlantedSentence], provenance: &str) -> Result<Corpus> {
    let comments = sentences
        .iter()
        .map(|s| LabeledComment::new(s.text.clone(), s.label))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(comments, provenance))
}
