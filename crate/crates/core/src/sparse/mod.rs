//! Lexical retrieval: tokenizer, BM25 inverted index and weighted queries.

mod index;
mod tokenizer;

pub use index::{Bm25Params, InvertedIndex, Posting, INDEX_FORMAT_VERSION};
pub use tokenizer::{tokenize, Tokenizer, TokenizerConfig, ENGLISH_STOPWORDS};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Bag of normalized terms with positive multiplicities.
///
/// Terms keep first-insertion order so score accumulation is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedQuery<S> {
    original_text: String,
    term_weights: Vec<(String, S)>,
}

impl<S: Scalar> WeightedQuery<S> {
    pub fn new(original_text: impl Into<String>) -> Self {
        Self {
            original_text: original_text.into(),
            term_weights: Vec::new(),
        }
    }

    /// Every token occurrence contributes weight 1.
    pub fn from_text(text: &str, tokenizer: &Tokenizer) -> Self {
        let mut q = Self::new(text);
        for t in tokenizer.tokenize(text) {
            q.add(&t, S::one());
        }
        q
    }

    /// Builds from already-normalized `(term, weight)` pairs. Duplicates are
    /// summed; non-positive totals are dropped.
    pub fn from_weights<I, T>(original_text: impl Into<String>, weights: I) -> Self
    where
        I: IntoIterator<Item = (T, S)>,
        T: AsRef<str>,
    {
        let mut q = Self::new(original_text);
        for (t, w) in weights {
            q.accumulate(t.as_ref(), w);
        }
        q.term_weights.retain(|(_, w)| *w > S::zero());
        q
    }

    /// Adds `weight` to `term`; ignored unless `weight > 0`.
    pub fn add(&mut self, term: &str, weight: S) {
        if weight > S::zero() {
            self.accumulate(term, weight);
        }
    }

    /// Adds every token of `text` with weight 1.
    pub fn add_text(&mut self, text: &str, tokenizer: &Tokenizer) {
        for t in tokenizer.tokenize(text) {
            self.add(&t, S::one());
        }
    }

    fn accumulate(&mut self, term: &str, weight: S) {
        match self.term_weights.iter_mut().find(|(t, _)| t == term) {
            Some((_, w)) => *w = *w + weight,
            None => self.term_weights.push((term.to_string(), weight)),
        }
    }

    pub fn original_text(&self) -> &str {
        &self.original_text
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, S)> {
        self.term_weights.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn weight(&self, term: &str) -> S {
        self.term_weights
            .iter()
            .find(|(t, _)| t == term)
            .map_or(S::zero(), |(_, w)| *w)
    }

    pub fn total_weight(&self) -> S {
        self.term_weights.iter().map(|(_, w)| *w).sum()
    }

    pub fn len(&self) -> usize {
        self.term_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_weights.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repetition_becomes_weight() {
        let tok = Tokenizer::default();
        let q: WeightedQuery<f64> = WeightedQuery::from_text("who won who won a a", &tok);
        assert_eq!(q.weight("who"), 2.0);
        assert_eq!(q.weight("won"), 2.0);
        // "a" is a stopword
        assert_eq!(q.weight("a"), 0.0);
        assert_eq!(q.terms().map(|(t, _)| t).collect::<Vec<_>>(), ["who", "won"]);
    }

    #[test]
    fn from_weights_drops_non_positive() {
        let q = WeightedQuery::<f64>::from_weights("", [("x", 0.5), ("y", 0.0), ("x", 0.25), ("z", -1.0)]);
        assert_eq!(q.len(), 1);
        assert_eq!(q.weight("x"), 0.75);
    }
}
