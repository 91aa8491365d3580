use std::collections::HashSet;

use super::{CotText, LanguageModel, RelVerdict, TermList};
use crate::corpus::{Corpus, Document, QrelSet, QueryRecord};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::sparse::InvertedIndex;

pub const DEFAULT_COT_MAX_CHARS: usize = 512;

/// Deterministic stand-in for a model.
///
/// - relevance comes from the judgments (`grade >= threshold`),
/// - keywords are the passage's top tf-idf terms not already in the query,
/// - chain-of-thought text is the query's relevant passages, concatenated and
///   truncated: a best-case generator.
pub struct OracleLlm<'a, S> {
    qrels: &'a QrelSet,
    index: &'a InvertedIndex<S>,
    corpus: &'a Corpus,
    cot_max_chars: usize,
}

impl<'a, S: Scalar> OracleLlm<'a, S> {
    pub fn new(qrels: &'a QrelSet, index: &'a InvertedIndex<S>, corpus: &'a Corpus) -> Self {
        Self {
            qrels,
            index,
            corpus,
            cot_max_chars: DEFAULT_COT_MAX_CHARS,
        }
    }

    pub fn with_cot_max_chars(mut self, chars: usize) -> Self {
        self.cot_max_chars = chars;
        self
    }

    fn relevant_text(&self, query_id: &str) -> String {
        let joined = self
            .qrels
            .relevant_docs(query_id)
            .into_iter()
            .filter_map(|d| self.corpus.get(d))
            .map(|d| d.text.trim())
            .collect::<Vec<_>>()
            .join(" ");
        truncate_chars(&joined, self.cot_max_chars)
    }
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((cut, _)) => s[..cut].trim_end().to_string(),
        None => s.to_string(),
    }
}

impl<S: Scalar> LanguageModel for OracleLlm<'_, S> {
    fn judge_relevance(&self, query: &QueryRecord, passage: &Document) -> Result<RelVerdict> {
        let answer = if self.qrels.is_relevant(&query.query_id, &passage.doc_id) {
            "yes"
        } else {
            "no"
        };
        Ok(RelVerdict::from_response(answer))
    }

    fn extract_terms(&self, query: &QueryRecord, passage: &Document, m: usize) -> Result<TermList> {
        let tokenizer = self.index.tokenizer();
        let query_terms: HashSet<String> = tokenizer.tokenize(&query.text).into_iter().collect();
        let owned;
        let vector: &[(String, u32)] = match self.index.term_vector(&passage.doc_id) {
            Some(v) => v,
            None => {
                let mut counts: Vec<(String, u32)> = Vec::new();
                let mut toks = tokenizer.tokenize(&passage.text);
                toks.sort();
                for t in toks {
                    match counts.last_mut() {
                        Some((last, c)) if *last == t => *c += 1,
                        _ => counts.push((t, 1)),
                    }
                }
                owned = counts;
                &owned
            }
        };
        let mut scored: Vec<(&str, S)> = vector
            .iter()
            .filter(|(t, _)| !query_terms.contains(t))
            .map(|(t, tf)| (t.as_str(), S::of(f64::from(*tf)) * self.index.idf(t)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(b.0))
        });
        Ok(TermList::new(scored.into_iter().map(|(t, _)| t), m))
    }

    fn generate_cot(&self, query: &QueryRecord) -> Result<CotText> {
        Ok(CotText::new(self.relevant_text(&query.query_id)))
    }

    fn generate_passage(&self, query: &QueryRecord) -> Result<CotText> {
        self.generate_cot(query)
    }
}
