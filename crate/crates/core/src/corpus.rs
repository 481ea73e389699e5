//! Labeled comment ingestion: loading, script/length filtering, seeded splits,
//! character vocabulary, fixed-length encoding, and agreement statistics.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;

pub const NUM_CLASSES: usize = 3;

/// Default character cap for encoded sentences.
pub const DEFAULT_MAX_LEN: usize = 200;

/// Default word cap applied by [`filter_comments`].
pub const DEFAULT_MAX_WORDS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl Polarity {
    pub const ALL: [Polarity; NUM_CLASSES] =
        [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
            Polarity::Positive => "positive",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Polarity {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_lowercase().as_str() {
            "negative" | "0" => Ok(Polarity::Negative),
            "neutral" | "1" => Ok(Polarity::Neutral),
            "positive" | "2" => Ok(Polarity::Positive),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledComment {
    pub text: String,
    pub label: Polarity,
}

impl LabeledComment {
    pub fn new(text: impl Into<String>, label: Polarity) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("comment text is empty".into()));
        }
        Ok(Self { text, label })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub comments: Vec<LabeledComment>,
    pub provenance: String,
}

impl Corpus {
    pub fn new(comments: Vec<LabeledComment>, provenance: impl Into<String>) -> Self {
        Self {
            comments,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    pub fn labels(&self) -> Vec<Polarity> {
        self.comments.iter().map(|c| c.label).collect()
    }

    /// Writes `text<TAB>label` lines in corpus order, labels spelled out.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for c in &self.comments {
            writeln!(out, "{}\t{}", c.text, c.label).expect("write to Vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads a `text<TAB>label` file. Blank lines are skipped; the label is taken
/// after the last tab so that it is never confused with text content.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let comments = parse_tsv(&raw)?;
    Ok(Corpus::new(comments, path.display().to_string()))
}

pub fn parse_tsv(raw: &str) -> Result<Vec<LabeledComment>> {
    let mut comments = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let (text, token) = line.rsplit_once('\t').ok_or_else(|| Error::MalformedLine {
            line: line_no,
            reason: "expected `text<TAB>label`".into(),
        })?;
        let label = token.parse::<Polarity>().map_err(|_| Error::UnknownLabel {
            token: token.to_string(),
            line: line_no,
        })?;
        if text.trim().is_empty() {
            return Err(Error::MalformedLine {
                line: line_no,
                reason: "empty text".into(),
            });
        }
        comments.push(LabeledComment {
            text: text.to_string(),
            label,
        });
    }
    Ok(comments)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RejectionReport {
    pub non_roman: usize,
    pub too_long: usize,
}

impl RejectionReport {
    pub fn total(&self) -> usize {
        self.non_roman + self.too_long
    }
}

/// Printable ASCII plus whitespace.
pub fn is_roman_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c.is_ascii_punctuation() || c.is_ascii_whitespace()
}

/// Keeps comments written entirely in roman script with at most `max_words`
/// whitespace-separated tokens. Non-roman comments are counted under
/// `non_roman` even when they are also too long.
pub fn filter_comments(corpus: &Corpus, max_words: usize) -> (Corpus, RejectionReport) {
    let mut report = RejectionReport::default();
    let mut kept = Vec::with_capacity(corpus.len());
    for c in &corpus.comments {
        if !c.text.chars().all(is_roman_char) {
            report.non_roman += 1;
        } else if c.text.split_whitespace().count() > max_words {
            report.too_long += 1;
        } else {
            kept.push(c.clone());
        }
    }
    (Corpus::new(kept, corpus.provenance.clone()), report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSet {
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
    pub seed: u64,
}

/// `(train, validation, test)` sizes for a corpus of `n` comments: the test
/// part takes `floor(0.2 n)`, validation takes `floor(0.2 rest)`.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let test = n / 5;
    let rest = n - test;
    let val = rest / 5;
    (rest - val, val, test)
}

/// Shuffles with the seeded generator and cuts test, then validation, off the
/// front of the permutation. Each part keeps the original relative file order.
pub fn split_corpus(corpus: &Corpus, seed: u64) -> Result<SplitSet> {
    let n = corpus.len();
    if n < 5 {
        return Err(Error::InvalidInput(format!(
            "corpus has {n} comments; at least 5 are needed to split"
        )));
    }
    let (_, val, test) = split_sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    Xoshiro256StarStar::seed_from_u64(seed).shuffle(&mut order);

    let mut test_idx = order[..test].to_vec();
    let mut val_idx = order[test..test + val].to_vec();
    let mut train_idx = order[test + val..].to_vec();
    test_idx.sort_unstable();
    val_idx.sort_unstable();
    train_idx.sort_unstable();

    let take = |idx: &[usize], part: &str| {
        Corpus::new(
            idx.iter().map(|&i| corpus.comments[i].clone()).collect(),
            format!("{}#{part}", corpus.provenance),
        )
    };
    Ok(SplitSet {
        train: take(&train_idx, "train"),
        validation: take(&val_idx, "validation"),
        test: take(&test_idx, "test"),
        seed,
    })
}

/// Character inventory with reserved padding (0) and out-of-vocabulary (1)
/// slots. Real characters start at index 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    index_of: HashMap<char, usize>,
    chars: Vec<char>,
}

impl CharVocab {
    pub const PAD: usize = 0;
    pub const OOV: usize = 1;

    /// Builds from an explicit character list, assigning indices in order.
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let mut vocab = CharVocab {
            index_of: HashMap::new(),
            chars: Vec::new(),
        };
        for c in chars {
            if c.to_lowercase().ne(std::iter::once(c)) {
                return Err(Error::InvalidInput(format!(
                    "vocabulary character {c:?} is not lowercase"
                )));
            }
            if vocab.index_of.contains_key(&c) {
                return Err(Error::InvalidInput(format!(
                    "duplicate vocabulary character {c:?}"
                )));
            }
            vocab.push(c);
        }
        Ok(vocab)
    }

    fn push(&mut self, c: char) {
        self.index_of.insert(c, self.chars.len() + 2);
        self.chars.push(c);
    }

    /// Number of embedding rows, including pad and oov.
    pub fn size(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn index(&self, c: char) -> usize {
        self.index_of.get(&c).copied().unwrap_or(Self::OOV)
    }

    pub fn char_at(&self, index: usize) -> Option<char> {
        index.checked_sub(2).and_then(|i| self.chars.get(i)).copied()
    }
}

/// Distinct lowercased characters of the training split, in order of first
/// appearance.
pub fn build_char_vocab(train: &Corpus) -> Result<CharVocab> {
    if train.is_empty() {
        return Err(Error::InvalidInput(
            "cannot build a vocabulary from an empty corpus".into(),
        ));
    }
    let mut vocab = CharVocab {
        index_of: HashMap::new(),
        chars: Vec::new(),
    };
    for comment in &train.comments {
        for c in comment.text.chars().flat_map(char::to_lowercase) {
            if !vocab.index_of.contains_key(&c) {
                vocab.push(c);
            }
        }
    }
    Ok(vocab)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub indices: Vec<usize>,
    pub true_length: usize,
}

/// Lowercases, maps through `vocab`, truncates to `max_len`, and right-pads
/// with [`CharVocab::PAD`].
pub fn encode_sentence(text: &str, vocab: &CharVocab, max_len: usize) -> Result<EncodedSentence> {
    if max_len == 0 {
        return Err(Error::InvalidInput("max_len must be at least 1".into()));
    }
    let mut indices: Vec<usize> = text
        .chars()
        .flat_map(char::to_lowercase)
        .take(max_len)
        .map(|c| vocab.index(c))
        .collect();
    if indices.is_empty() {
        return Err(Error::InvalidInput("cannot encode empty text".into()));
    }
    let true_length = indices.len();
    indices.resize(max_len, CharVocab::PAD);
    Ok(EncodedSentence {
        indices,
        true_length,
    })
}

/// Inverse of [`encode_sentence`] over the first `true_length` positions.
/// Out-of-vocabulary slots decode to U+FFFD.
pub fn decode_sentence(encoded: &EncodedSentence, vocab: &CharVocab) -> String {
    encoded.indices[..encoded.true_length]
        .iter()
        .map(|&i| vocab.char_at(i).unwrap_or('\u{FFFD}'))
        .collect()
}

/// Proportions of (negative, neutral, positive).
pub fn class_distribution(corpus: &Corpus) -> Result<[f64; NUM_CLASSES]> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput(
            "class distribution of an empty corpus".into(),
        ));
    }
    let mut counts = [0usize; NUM_CLASSES];
    for c in &corpus.comments {
        counts[c.label.index()] += 1;
    }
    let n = corpus.len() as f64;
    Ok(counts.map(|k| k as f64 / n))
}

/// Chance-corrected agreement between two annotators.
pub fn cohens_kappa(labels_a: &[Polarity], labels_b: &[Polarity]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::InvalidInput(format!(
            "annotation lengths differ: {} vs {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.is_empty() {
        return Err(Error::InvalidInput("no annotations to compare".into()));
    }
    let n = labels_a.len() as f64;
    let mut agree = 0usize;
    let mut marg_a = [0usize; NUM_CLASSES];
    let mut marg_b = [0usize; NUM_CLASSES];
    for (&a, &b) in labels_a.iter().zip(labels_b) {
        if a == b {
            agree += 1;
        }
        marg_a[a.index()] += 1;
        marg_b[b.index()] += 1;
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marg_a
        .iter()
        .zip(&marg_b)
        .map(|(&x, &y)| (x as f64 / n) * (y as f64 / n))
        .sum();
    if p_e >= 1.0 {
        return Err(Error::InvalidInput(
            "kappa is undefined when expected agreement is 1".into(),
        ));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
