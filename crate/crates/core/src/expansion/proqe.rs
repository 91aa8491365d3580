//! Progressive query expansion for sparse retrieval.
//!
//! Each iteration fetches the single best document the session has not paid
//! for yet, asks the model whether it is relevant and which keywords it
//! offers, moves those keywords' weights up (relevant) or down (irrelevant),
//! and rebuilds the query from the original text plus every positively
//! weighted term. After the last iteration the model's chain-of-thought
//! answer is appended once.

use std::collections::HashSet;
use std::thread;

use serde::Serialize;

use super::{ExpandedQuery, ProqeParams, TermWeightTable};
use crate::corpus::{Corpus, QueryRecord};
use crate::error::{Error, Result};
use crate::gateway::{MeteredGateway, RetrievalSession};
use crate::llm::{CotText, LanguageModel, RelVerdict, TermList};
use crate::retriever::{Retriever, ScoredDoc};
use crate::scalar::Scalar;
use crate::sparse::{Tokenizer, WeightedQuery};

/// One pass of the loop, kept for audit and replay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord<S> {
    pub iteration: usize,
    /// Text form of the query used to fetch the document.
    pub retrieval_query: String,
    pub doc_id: String,
    pub relevant: bool,
    pub raw_verdict: String,
    /// Normalized unigrams that received the weight update.
    pub terms: Vec<String>,
    pub table: Vec<(String, S)>,
    /// Session charge after this iteration's fetch.
    pub charge: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProqeOutcome<S> {
    /// q': the last intermediate query with the chain-of-thought text appended.
    pub final_query: ExpandedQuery,
    /// q+ after the last iteration.
    pub intermediate: ExpandedQuery,
    pub cot: CotText,
    pub table: TermWeightTable<S>,
    pub trace: Vec<IterationRecord<S>>,
    /// True when the source ran out of unseen documents before `n` iterations.
    pub exhausted: bool,
}

/// A run that stopped on an error, with the iterations completed so far.
#[derive(Debug, thiserror::Error)]
#[error("{error} (after {} iteration(s))", trace.len())]
pub struct ProqeAbort<S: std::fmt::Debug> {
    #[source]
    pub error: Error,
    pub trace: Vec<IterationRecord<S>>,
}

/// Splits extracted keywords into index unigrams, each kept once, in order.
pub fn normalize_terms(terms: &TermList, tokenizer: &Tokenizer) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for keyword in terms.terms() {
        for t in tokenizer.tokenize(keyword) {
            if seen.insert(t.clone()) {
                out.push(t);
            }
        }
    }
    out
}

/// `w(t) += beta` for a relevant verdict, `w(t) -= gamma` otherwise. Unknown
/// terms enter the table at 0 first.
pub fn proqe_update_weights<S: Scalar>(
    table: &mut TermWeightTable<S>,
    terms: &[String],
    verdict: &RelVerdict,
    params: &ProqeParams<S>,
) {
    let delta = if verdict.relevant() {
        params.beta
    } else {
        -params.gamma
    };
    for t in terms {
        table.bump(t, delta);
    }
}

/// q+: `alpha` copies of the query, then each term with `w > 0` repeated
/// `floor(w)` times, in table order.
pub fn formulate_sparse_query<S: Scalar>(
    query: &QueryRecord,
    table: &TermWeightTable<S>,
    alpha: S,
) -> ExpandedQuery {
    let reps = alpha.floor().to_usize().unwrap_or(0);
    let provenance = table
        .iter()
        .filter(|(_, w)| *w > S::zero())
        .filter_map(|(t, w)| {
            let n = w.floor().to_usize().unwrap_or(0);
            (n > 0).then(|| (t.to_string(), n))
        })
        .collect();
    ExpandedQuery {
        original: query.text.clone(),
        alpha_repetitions: reps,
        provenance,
        appended: None,
    }
}

pub(crate) struct Fetched<S> {
    pub doc: ScoredDoc<S>,
    pub charge: f64,
    pub retrieval_query: String,
}

/// The judge/extract/update cycle shared by the sparse and dense runners.
/// `fetch` gets the 1-based iteration and current table and returns the next
/// unseen document, or `None` when the source is exhausted.
#[allow(clippy::too_many_arguments)]
pub(crate) fn progressive_loop<S, L, F>(
    query: &QueryRecord,
    corpus: &Corpus,
    tokenizer: &Tokenizer,
    llm: &L,
    params: &ProqeParams<S>,
    table: &mut TermWeightTable<S>,
    trace: &mut Vec<IterationRecord<S>>,
    mut fetch: F,
) -> Result<bool>
where
    S: Scalar,
    L: LanguageModel + ?Sized,
    F: FnMut(usize, &TermWeightTable<S>) -> Result<Option<Fetched<S>>>,
{
    for iteration in 1..=params.n_iterations {
        let Some(fetched) = fetch(iteration, table)? else {
            return Ok(true);
        };
        let passage = corpus
            .get(&fetched.doc.doc_id)
            .ok_or_else(|| Error::UnknownDocId(fetched.doc.doc_id.clone()))?;

        // The two model calls are independent of each other.
        let (verdict, terms) = thread::scope(|s| {
            let judge = s.spawn(|| llm.judge_relevance(query, passage));
            let terms = llm.extract_terms(query, passage, params.m_terms);
            let verdict = judge.join().expect("relevance judge panicked");
            (verdict, terms)
        });
        let verdict = verdict?;
        let terms = normalize_terms(&terms?, tokenizer);

        proqe_update_weights(table, &terms, &verdict, params);
        trace.push(IterationRecord {
            iteration,
            retrieval_query: fetched.retrieval_query,
            doc_id: fetched.doc.doc_id,
            relevant: verdict.relevant(),
            raw_verdict: verdict.raw_response().to_string(),
            terms,
            table: table.snapshot(),
            charge: fetched.charge,
        });
    }
    Ok(false)
}

/// Runs the full sparse loop for one query inside `session` and returns q'.
/// The final retrieval with q' is left to the caller.
pub fn run_proqe_sparse<S, R, L>(
    query: &QueryRecord,
    corpus: &Corpus,
    tokenizer: &Tokenizer,
    gateway: &MeteredGateway<R>,
    session: &mut RetrievalSession,
    llm: &L,
    params: &ProqeParams<S>,
) -> std::result::Result<ProqeOutcome<S>, ProqeAbort<S>>
where
    S: Scalar,
    R: Retriever<S, Query = WeightedQuery<S>>,
    L: LanguageModel + ?Sized,
{
    let mut trace = Vec::new();
    let abort = |error: Error, trace: Vec<IterationRecord<S>>| ProqeAbort { error, trace };
    if let Err(e) = params.validate() {
        return Err(abort(e, trace));
    }
    let mut table = TermWeightTable::new();

    let looped = progressive_loop(
        query,
        corpus,
        tokenizer,
        llm,
        params,
        &mut table,
        &mut trace,
        |iteration, table| {
            let (text, weighted) = if iteration == 1 {
                (query.text.clone(), WeightedQuery::from_text(&query.text, tokenizer))
            } else {
                let q_plus = formulate_sparse_query(query, table, params.alpha);
                (q_plus.text_form(), q_plus.to_weighted(tokenizer))
            };
            let doc = gateway.retrieve_top_new(session, &weighted, params.candidate_budget_k)?;
            Ok(doc.map(|doc| Fetched {
                doc,
                charge: session.charge(),
                retrieval_query: text,
            }))
        },
    );
    let exhausted = match looped {
        Ok(e) => e,
        Err(e) => return Err(abort(e, trace)),
    };

    let intermediate = formulate_sparse_query(query, &table, params.alpha);
    let cot = match llm.generate_cot(query) {
        Ok(c) => c,
        Err(e) => return Err(abort(e, trace)),
    };
    let final_query = intermediate.clone().with_appended(&cot.text);
    Ok(ProqeOutcome {
        final_query,
        intermediate,
        cot,
        table,
        trace,
        exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(rel: bool) -> RelVerdict {
        RelVerdict::from_response(if rel { "yes" } else { "no" })
    }

    fn table(pairs: &[(&str, f64)]) -> TermWeightTable<f64> {
        let mut t = TermWeightTable::new();
        for (k, w) in pairs {
            t.bump(k, *w);
        }
        t
    }

    #[test]
    fn update_relevant_adds_beta() {
        let mut t = table(&[("t", 0.0)]);
        proqe_update_weights(&mut t, &["t".into()], &verdict(true), &ProqeParams::default());
        assert_eq!(t.weight("t"), Some(1.0));
    }

    #[test]
    fn update_irrelevant_with_default_gamma_is_noop() {
        let mut t = table(&[("t", 2.0)]);
        proqe_update_weights(&mut t, &["t".into()], &verdict(false), &ProqeParams::default());
        assert_eq!(t.weight("t"), Some(2.0));
    }

    #[test]
    fn update_irrelevant_subtracts_gamma() {
        let mut t = table(&[("t", 2.0), ("other", 3.0)]);
        let p = ProqeParams { gamma: 1.0, ..ProqeParams::default() };
        proqe_update_weights(&mut t, &["t".into(), "new".into()], &verdict(false), &p);
        assert_eq!(t.weight("t"), Some(1.0));
        assert_eq!(t.weight("new"), Some(-1.0));
        assert_eq!(t.weight("other"), Some(3.0));
    }

    #[test]
    fn formulate_examples() {
        let q = QueryRecord::new("q", "who won");
        let f = |pairs: &[(&str, f64)], alpha: f64| {
            formulate_sparse_query(&q, &table(pairs), alpha).text_form()
        };
        assert_eq!(f(&[("a", 2.0), ("b", 0.0)], 1.0), "who won a a");
        assert_eq!(f(&[], 2.0), "who won who won");
        assert_eq!(f(&[("a", 0.5)], 1.0), "who won");
        assert_eq!(f(&[("a", 2.7), ("b", -1.0), ("c", 1.0)], 1.0), "who won a a c");
    }

    #[test]
    fn normalize_splits_phrases() {
        let tok = Tokenizer::default();
        let list = TermList::new(["Voting Rights", "rights", "the amendment"], 5);
        assert_eq!(normalize_terms(&list, &tok), ["voting", "rights", "amendment"]);
    }
}
