//! Pseudo-relevance feedback baselines: RM3 and Rocchio.
//!
//! Both take the top documents of a first-pass BM25 search as feedback. The
//! `*_from_feedback` variants accept a feedback list fetched elsewhere (for
//! example through a metered gateway) so baseline retrieval can be billed.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::QueryRecord;
use crate::retriever::ScoredDoc;
use crate::scalar::Scalar;
use crate::sparse::{InvertedIndex, WeightedQuery};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rm3Params<S> {
    pub fb_docs: usize,
    pub fb_terms: usize,
    /// Interpolation weight of the original query.
    pub query_weight: S,
}

impl<S: Scalar> Default for Rm3Params<S> {
    fn default() -> Self {
        Self {
            fb_docs: 10,
            fb_terms: 10,
            query_weight: S::of(0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocchioParams<S> {
    pub fb_docs: usize,
    pub fb_terms: usize,
    /// Original query coefficient.
    pub a: S,
    /// Relevant (feedback) centroid coefficient.
    pub b: S,
    /// Non-relevant centroid coefficient; there is no non-relevant set in
    /// pseudo feedback, so it only matters as a check on configuration.
    pub c: S,
}

impl<S: Scalar> Default for RocchioParams<S> {
    fn default() -> Self {
        Self {
            fb_docs: 3,
            fb_terms: 5,
            a: S::one(),
            b: S::of(0.75),
            c: S::zero(),
        }
    }
}

fn by_weight_then_term<S: Scalar>(a: &(String, S), b: &(String, S)) -> std::cmp::Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

pub fn rm3_expand<S: Scalar>(
    query: &QueryRecord,
    index: &InvertedIndex<S>,
    params: &Rm3Params<S>,
) -> WeightedQuery<S> {
    let original = WeightedQuery::from_text(&query.text, index.tokenizer());
    let feedback = index.search(&original, params.fb_docs.max(1), &HashSet::new());
    rm3_from_feedback(query, index, &feedback, params)
}

/// RM3 with a given feedback list (best first; only the first `fb_docs` are
/// used).
///
/// `P(t|R) ∝ Σ_d P(t|d)·P(d)` with `P(t|d) = tf/len` and `P(d)` the softmax
/// of the feedback BM25 scores. The top `fb_terms` terms are renormalized and
/// mixed with the sum-normalized original query.
pub fn rm3_from_feedback<S: Scalar>(
    query: &QueryRecord,
    index: &InvertedIndex<S>,
    feedback: &[ScoredDoc<S>],
    params: &Rm3Params<S>,
) -> WeightedQuery<S> {
    let original = WeightedQuery::from_text(&query.text, index.tokenizer());
    let docs: Vec<&ScoredDoc<S>> = feedback
        .iter()
        .filter(|d| index.contains(&d.doc_id))
        .take(params.fb_docs)
        .collect();
    if docs.is_empty() || original.is_empty() {
        return original;
    }

    let max = docs
        .iter()
        .map(|d| d.score)
        .fold(S::neg_infinity(), S::max);
    let exp: Vec<S> = docs.iter().map(|d| (d.score - max).exp()).collect();
    let z: S = exp.iter().copied().sum();

    let mut relevance_model: BTreeMap<&str, S> = BTreeMap::new();
    for (doc, e) in docs.iter().zip(&exp) {
        let doc_weight = *e / z;
        let len = S::of(f64::from(index.doc_length(&doc.doc_id).unwrap_or(0)));
        if len <= S::zero() {
            continue;
        }
        for (term, tf) in index.term_vector(&doc.doc_id).unwrap_or(&[]) {
            let p = S::of(f64::from(*tf)) / len * doc_weight;
            let slot = relevance_model.entry(term.as_str()).or_insert_with(S::zero);
            *slot = *slot + p;
        }
    }
    let mut ranked: Vec<(String, S)> = relevance_model
        .into_iter()
        .map(|(t, p)| (t.to_string(), p))
        .collect();
    ranked.sort_by(by_weight_then_term);
    ranked.truncate(params.fb_terms);
    let kept_mass: S = ranked.iter().map(|(_, p)| *p).sum();

    let qw = params.query_weight;
    let orig_mass = original.total_weight();
    let mut mixed: Vec<(String, S)> = original
        .terms()
        .map(|(t, w)| (t.to_string(), qw * w / orig_mass))
        .collect();
    if kept_mass > S::zero() {
        for (t, p) in ranked {
            mixed.push((t, (S::one() - qw) * p / kept_mass));
        }
    }
    WeightedQuery::from_weights(query.text.clone(), mixed)
}

pub fn rocchio_expand<S: Scalar>(
    query: &QueryRecord,
    index: &InvertedIndex<S>,
    params: &RocchioParams<S>,
) -> WeightedQuery<S> {
    let original = WeightedQuery::from_text(&query.text, index.tokenizer());
    let feedback = index.search(&original, params.fb_docs.max(1), &HashSet::new());
    rocchio_from_feedback(query, index, &feedback, params)
}

/// Rocchio with a given feedback list.
///
/// The query vector and every feedback tf-idf vector are L2-normalized;
/// `q' = a·q + b·centroid`. All original terms are kept, plus the
/// `fb_terms` best new terms; non-positive weights are dropped.
pub fn rocchio_from_feedback<S: Scalar>(
    query: &QueryRecord,
    index: &InvertedIndex<S>,
    feedback: &[ScoredDoc<S>],
    params: &RocchioParams<S>,
) -> WeightedQuery<S> {
    let original = WeightedQuery::from_text(&query.text, index.tokenizer());
    let docs: Vec<&ScoredDoc<S>> = feedback
        .iter()
        .filter(|d| index.contains(&d.doc_id))
        .take(params.fb_docs)
        .collect();
    if docs.is_empty() || original.is_empty() {
        return original;
    }

    let q_norm = original
        .terms()
        .map(|(_, w)| w * w)
        .sum::<S>()
        .sqrt();
    let mut centroid: BTreeMap<&str, S> = BTreeMap::new();
    let n_docs = S::of_usize(docs.len());
    for doc in &docs {
        let vector: Vec<(&str, S)> = index
            .term_vector(&doc.doc_id)
            .unwrap_or(&[])
            .iter()
            .map(|(t, tf)| (t.as_str(), S::of(f64::from(*tf)) * index.idf(t)))
            .collect();
        let norm = vector.iter().map(|(_, w)| *w * *w).sum::<S>().sqrt();
        if norm <= S::zero() {
            continue;
        }
        for (t, w) in vector {
            let slot = centroid.entry(t).or_insert_with(S::zero);
            *slot = *slot + w / norm / n_docs;
        }
    }

    let mut kept: Vec<(String, S)> = original
        .terms()
        .map(|(t, w)| {
            let fb = centroid.get(t).copied().unwrap_or_else(S::zero);
            (t.to_string(), params.a * w / q_norm + params.b * fb)
        })
        .collect();
    let mut expansion: Vec<(String, S)> = centroid
        .into_iter()
        .filter(|(t, _)| original.weight(t) == S::zero())
        .map(|(t, w)| (t.to_string(), params.b * w))
        .filter(|(_, w)| *w > S::zero())
        .collect();
    expansion.sort_by(by_weight_then_term);
    expansion.truncate(params.fb_terms);
    kept.extend(expansion);
    WeightedQuery::from_weights(query.text.clone(), kept)
}
