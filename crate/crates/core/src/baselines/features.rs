use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase, split on whitespace, strip surrounding ASCII punctuation, drop
/// empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    entries: Vec<(usize, f64)>,
}

impl SparseVec {
    /// Sorts and merges duplicate indices by summation.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        if pairs.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite("sparse vector value".into()));
        }
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => entries.push((i, v)),
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    /// Every positive value becomes 1.
    pub fn binarized(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|&(i, v)| (i, if v > 0.0 { 1.0 } else { v }))
                .collect(),
        }
    }

    pub fn scaled_by(&self, weights: &[f64]) -> Self {
        Self {
            entries: self.entries.iter().map(|&(i, v)| (i, v * weights[i])).collect(),
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            entries: self.entries.iter().map(|&(i, v)| (i, f(v))).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NGramRange {
    Unigram,
    UniBigram,
}

/// N-gram → feature index, assigned in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramVocab {
    index_of: HashMap<String, usize>,
    grams: Vec<String>,
    pub range: NGramRange,
}

fn grams_of(tokens: &[String], range: NGramRange) -> impl Iterator<Item = String> + '_ {
    let bigrams = match range {
        NGramRange::Unigram => None,
        NGramRange::UniBigram => Some(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1]))),
    };
    tokens.iter().cloned().chain(bigrams.into_iter().flatten())
}

impl NGramVocab {
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a [String]>, range: NGramRange) -> Self {
        let mut vocab = Self {
            index_of: HashMap::new(),
            grams: Vec::new(),
            range,
        };
        for tokens in docs {
            for g in grams_of(tokens, range) {
                if !vocab.index_of.contains_key(&g) {
                    vocab.index_of.insert(g.clone(), vocab.grams.len());
                    vocab.grams.push(g);
                }
            }
        }
        vocab
    }

    /// Rebuilds from a stored list; bigrams are space-joined token pairs.
    pub fn from_grams(grams: Vec<String>, range: NGramRange) -> Result<Self> {
        let mut index_of = HashMap::with_capacity(grams.len());
        for (i, g) in grams.iter().enumerate() {
            if index_of.insert(g.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate n-gram '{g}'")));
            }
        }
        Ok(Self {
            index_of,
            grams,
            range,
        })
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn grams(&self) -> &[String] {
        &self.grams
    }

    pub fn index(&self, gram: &str) -> Option<usize> {
        self.index_of.get(gram).copied()
    }
}

/// Counts of in-vocabulary n-grams; unknown n-grams are dropped.
pub fn ngram_vectorize(tokens: &[String], vocab: &NGramVocab) -> SparseVec {
    let pairs = grams_of(tokens, vocab.range)
        .filter_map(|g| vocab.index(&g))
        .map(|i| (i, 1.0))
        .collect();
    SparseVec::from_pairs(pairs).expect("counts are finite")
}

/// Inverse document frequencies frozen from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tfidf {
    pub idf: Vec<f64>,
}

impl Tfidf {
    /// `idf_j = ln(N / df_j)`; features absent from every document get 0.
    pub fn fit(train_counts: &[SparseVec], dim: usize) -> Self {
        let mut df = vec![0usize; dim];
        for doc in train_counts {
            for &(i, v) in doc.entries() {
                if v > 0.0 {
                    df[i] += 1;
                }
            }
        }
        let n = train_counts.len() as f64;
        let idf = df
            .into_iter()
            .map(|d| if d == 0 { 0.0 } else { (n / d as f64).ln() })
            .collect();
        Self { idf }
    }

    /// `tf · idf`, then unit L2 norm. All-zero documents stay zero.
    pub fn transform(&self, counts: &SparseVec) -> SparseVec {
        let weighted = counts.scaled_by(&self.idf);
        let norm = weighted.entries().iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            weighted
        } else {
            weighted.map_values(|v| v / norm)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Trailer dhannnsu hai bhai"), toks(&["trailer", "dhannnsu", "hai", "bhai"]));
        assert_eq!(tokenize("sir hlp plzz naa!!"), toks(&["sir", "hlp", "plzz", "naa"]));
        assert!(tokenize("   ").is_empty());
        assert!(tokenize("... !!").is_empty());
        assert_eq!(tokenize("(don't)"), toks(&["don't"]));
    }

    #[test]
    fn unigram_counts() {
        let docs = [toks(&["a", "b"])];
        let vocab = NGramVocab::build(docs.iter().map(|d| d.as_slice()), NGramRange::Unigram);
        let v = ngram_vectorize(&toks(&["a", "b", "a"]), &vocab);
        assert_eq!(v.entries(), &[(0, 2.0), (1, 1.0)]);
        assert!(ngram_vectorize(&toks(&["z", "y"]), &vocab).is_empty());
    }

    #[test]
    fn bigram_counts() {
        let docs = [toks(&["a", "b"])];
        let vocab = NGramVocab::build(docs.iter().map(|d| d.as_slice()), NGramRange::UniBigram);
        assert_eq!(vocab.grams(), &toks(&["a", "b", "a b"]));
        let v = ngram_vectorize(&toks(&["a", "b"]), &vocab);
        assert_eq!(v.entries(), &[(0, 1.0), (1, 1.0), (2, 1.0)]);
    }

    #[test]
    fn tfidf_cases() {
        let d0 = SparseVec::from_pairs(vec![(0, 3.0), (1, 1.0)]).unwrap();
        let d1 = SparseVec::from_pairs(vec![(1, 2.0)]).unwrap();
        let t = Tfidf::fit(&[d0.clone(), d1.clone()], 2);
        assert_eq!(t.idf[1], 0.0, "term in every document");
        assert!((t.idf[0] - 2f64.ln()).abs() < 1e-15);
        let w = t.transform(&SparseVec::from_pairs(vec![(0, 3.0)]).unwrap());
        assert!((w.get(0) - 1.0).abs() < 1e-15);
        assert_eq!(t.transform(&d1).get(1), 0.0);
        assert!(t.transform(&SparseVec::default()).is_empty());
    }

    #[test]
    fn sparse_merges_and_sorts() {
        let v = SparseVec::from_pairs(vec![(3, 1.0), (1, 2.0), (3, 0.5)]).unwrap();
        assert_eq!(v.entries(), &[(1, 2.0), (3, 1.5)]);
        assert!(SparseVec::from_pairs(vec![(0, f64::NAN)]).is_err());
    }
}
