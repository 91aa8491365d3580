//! Query expansion strategies: progressive expansion (ProQE) and the PRF and
//! generative baselines it is compared with.

mod generative;
mod prf;
mod proqe;

pub use generative::{cot_expand, query2doc_expand};
pub use prf::{
    rm3_expand, rm3_from_feedback, rocchio_expand, rocchio_from_feedback, Rm3Params,
    RocchioParams,
};
pub use proqe::{
    formulate_sparse_query, normalize_terms, proqe_update_weights, run_proqe_sparse,
    IterationRecord, ProqeAbort, ProqeOutcome,
};
pub(crate) use proqe::{progressive_loop, Fetched};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::{Tokenizer, WeightedQuery};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProqeParams<S> {
    /// Number of copies of the original query in q+.
    pub alpha: S,
    /// Weight added to each extracted term after a relevant verdict.
    pub beta: S,
    /// Weight subtracted after an irrelevant verdict.
    pub gamma: S,
    pub n_iterations: usize,
    pub m_terms: usize,
    /// Candidates requested from the gateway per top-1-new lookup.
    pub candidate_budget_k: usize,
}

impl<S: Scalar> Default for ProqeParams<S> {
    fn default() -> Self {
        Self {
            alpha: S::one(),
            beta: S::one(),
            gamma: S::zero(),
            n_iterations: 5,
            m_terms: 5,
            candidate_budget_k: 1,
        }
    }
}

impl<S: Scalar> ProqeParams<S> {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha < S::zero() {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.n_iterations == 0 || self.m_terms == 0 || self.candidate_budget_k == 0 {
            return Err(Error::InvalidArgument(
                "n, m and the candidate budget must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Copies of the original query text: `floor(alpha)`.
    pub fn alpha_repetitions(&self) -> usize {
        self.alpha.floor().to_usize().unwrap_or(0)
    }
}

/// The global term dictionary: every term ever extracted, with its weight,
/// in insertion order. Terms stay even when their weight drops to zero or
/// below.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TermWeightTable<S> {
    entries: Vec<(String, S)>,
    #[serde(skip)]
    slots: HashMap<String, usize>,
}

impl<S: Scalar> TermWeightTable<S> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            slots: HashMap::new(),
        }
    }

    /// Adds `delta` to `term`, inserting it at weight 0 first if needed.
    pub(crate) fn bump(&mut self, term: &str, delta: S) {
        let slot = match self.slots.get(term) {
            Some(&i) => i,
            None => {
                self.entries.push((term.to_string(), S::zero()));
                self.slots.insert(term.to_string(), self.entries.len() - 1);
                self.entries.len() - 1
            }
        };
        let w = &mut self.entries[slot].1;
        *w = *w + delta;
    }

    pub fn weight(&self, term: &str) -> Option<S> {
        self.slots.get(term).map(|&i| self.entries[i].1)
    }

    /// Total number of terms, M.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, S)> {
        self.entries.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn snapshot(&self) -> Vec<(String, S)> {
        self.entries.clone()
    }
}

/// An expanded sparse query: `alpha` copies of the original text, then each
/// emitted term repeated, then optional generated text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub original: String,
    pub alpha_repetitions: usize,
    /// `(term, repetitions)` in table order, only terms emitted at least once.
    pub provenance: Vec<(String, usize)>,
    pub appended: Option<String>,
}

impl ExpandedQuery {
    pub fn boosted(original: impl Into<String>, alpha_repetitions: usize) -> Self {
        Self {
            original: original.into(),
            alpha_repetitions,
            provenance: Vec::new(),
            appended: None,
        }
    }

    /// Same query with `text` concatenated at the end (skipped when blank).
    pub fn with_appended(mut self, text: &str) -> Self {
        if !text.trim().is_empty() {
            self.appended = Some(text.to_string());
        }
        self
    }

    pub fn text_form(&self) -> String {
        let mut parts: Vec<&str> = Vec::new();
        for _ in 0..self.alpha_repetitions {
            parts.push(&self.original);
        }
        for (term, reps) in &self.provenance {
            for _ in 0..*reps {
                parts.push(term);
            }
        }
        if let Some(extra) = &self.appended {
            parts.push(extra);
        }
        parts.join(" ")
    }

    /// Bag-of-words form for sparse search. Provenance terms are already
    /// tokenizer-normalized and are used verbatim.
    pub fn to_weighted<S: Scalar>(&self, tokenizer: &Tokenizer) -> WeightedQuery<S> {
        let mut q = WeightedQuery::new(self.text_form());
        let base = tokenizer.tokenize(&self.original);
        for _ in 0..self.alpha_repetitions {
            for t in &base {
                q.add(t, S::one());
            }
        }
        for (term, reps) in &self.provenance {
            q.add(term, S::of_usize(*reps));
        }
        if let Some(extra) = &self.appended {
            q.add_text(extra, tokenizer);
        }
        q
    }
}
