use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 33-word English stop set used by Lucene's `StandardAnalyzer`.
pub const ENGLISH_STOPWORDS: [&str; 33] = [
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it",
    "no", "not", "of", "on", "or", "such", "that", "the", "their", "then", "there", "these",
    "they", "this", "to", "was", "will", "with",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Porter stemming.
    pub stem: bool,
    pub stopwords: BTreeSet<String>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            stem: false,
            stopwords: ENGLISH_STOPWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TokenizerConfig {
    pub fn with_stem(mut self, stem: bool) -> Self {
        self.stem = stem;
        self
    }

    pub fn with_stopwords<I, T>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        self.stopwords = words.into_iter().map(Into::into).collect();
        self
    }

    /// Replaces the stop set with the words in `path`, one per line.
    pub fn with_stopword_file(self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let words: Vec<String> = text
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Ok(self.with_stopwords(words))
    }
}

/// Lowercase, split on non-alphanumerics, drop stopwords, then stem.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    config: TokenizerConfig,
}

impl Tokenizer {
    pub fn new(config: TokenizerConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let cased;
        let text = if self.config.lowercase {
            cased = text.to_lowercase();
            cased.as_str()
        } else {
            text
        };
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .filter(|t| !self.config.stopwords.contains(*t))
            .map(|t| {
                if self.config.stem {
                    porter_stemmer::stem(t)
                } else {
                    t.to_string()
                }
            })
            .filter(|t| !t.is_empty())
            .collect()
    }
}

pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    Tokenizer::new(config.clone()).tokenize(text)
}
