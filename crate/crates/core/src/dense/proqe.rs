use std::cell::RefCell;
use std::collections::HashMap;

use serde::Serialize;

use super::{combine_final, combine_weighted, DenseParams, Embedding, Encoder};
use crate::corpus::{Corpus, QueryRecord};
use crate::error::Error;
use crate::expansion::{
    progressive_loop, Fetched, IterationRecord, ProqeAbort, ProqeParams, TermWeightTable,
};
use crate::gateway::{MeteredGateway, RetrievalSession};
use crate::llm::{CotText, LanguageModel};
use crate::retriever::Retriever;
use crate::scalar::Scalar;
use crate::sparse::Tokenizer;

#[derive(Debug, Clone, Serialize)]
pub struct DenseOutcome<S> {
    pub query_embedding: Embedding<S>,
    /// E(q+) after the last iteration.
    pub intermediate: Embedding<S>,
    /// E(q'), used for the final search.
    pub final_embedding: Embedding<S>,
    pub cot: CotText,
    pub table: TermWeightTable<S>,
    pub trace: Vec<IterationRecord<S>>,
    pub exhausted: bool,
}

/// Term embeddings are computed once per term and reused across iterations.
struct TermCache<'e, S, E: ?Sized> {
    encoder: &'e E,
    cache: RefCell<HashMap<String, Embedding<S>>>,
}

impl<S: Scalar, E: Encoder<S> + ?Sized> TermCache<'_, S, E> {
    fn intermediate(
        &self,
        query: &Embedding<S>,
        table: &TermWeightTable<S>,
        params: &DenseParams<S>,
    ) -> crate::error::Result<Embedding<S>> {
        let mut cache = self.cache.borrow_mut();
        let selected: Vec<(&str, S)> = table
            .iter()
            .filter(|(_, w)| !params.positive_only || *w > S::zero())
            .collect();
        for (t, _) in &selected {
            if !cache.contains_key(*t) {
                cache.insert(t.to_string(), self.encoder.encode(t));
            }
        }
        let terms: Vec<(S, &Embedding<S>)> = selected.iter().map(|(t, w)| (*w, &cache[*t])).collect();
        combine_weighted(query, &terms, params)
    }
}

/// The progressive loop in embedding space. Each iteration searches with the
/// current intermediate embedding; after the loop the chain-of-thought text is
/// encoded and mixed in. The final search is left to the caller.
#[allow(clippy::too_many_arguments)]
pub fn run_proqe_dense<S, R, L, E>(
    query: &QueryRecord,
    corpus: &Corpus,
    tokenizer: &Tokenizer,
    gateway: &MeteredGateway<R>,
    session: &mut RetrievalSession,
    llm: &L,
    encoder: &E,
    proqe_params: &ProqeParams<S>,
    dense_params: &DenseParams<S>,
) -> Result<DenseOutcome<S>, ProqeAbort<S>>
where
    S: Scalar,
    R: Retriever<S, Query = Embedding<S>>,
    L: LanguageModel + ?Sized,
    E: Encoder<S> + ?Sized,
{
    let mut trace = Vec::new();
    let abort = |error: Error, trace| ProqeAbort { error, trace };
    if let Err(e) = proqe_params.validate() {
        return Err(abort(e, trace));
    }
    let query_embedding = encoder.encode(&query.text);
    let terms = TermCache {
        encoder,
        cache: RefCell::new(HashMap::new()),
    };
    let mut table = TermWeightTable::new();

    let looped = progressive_loop(
        query,
        corpus,
        tokenizer,
        llm,
        proqe_params,
        &mut table,
        &mut trace,
        |_, table| {
            let current = terms.intermediate(&query_embedding, table, dense_params)?;
            let doc = gateway.retrieve_top_new(session, &current, proqe_params.candidate_budget_k)?;
            Ok(doc.map(|doc| Fetched {
                doc,
                charge: session.charge(),
                retrieval_query: describe(table),
            }))
        },
    );
    let exhausted = match looped {
        Ok(e) => e,
        Err(e) => return Err(abort(e, trace)),
    };

    let intermediate = match terms.intermediate(&query_embedding, &table, dense_params) {
        Ok(v) => v,
        Err(e) => return Err(abort(e, trace)),
    };
    let cot = match llm.generate_cot(query) {
        Ok(c) => c,
        Err(e) => return Err(abort(e, trace)),
    };
    let cot_embedding = if cot.is_empty() {
        Embedding::zeros(encoder.dim())
    } else {
        encoder.encode(&cot.text)
    };
    let final_embedding = match combine_final(&intermediate, &cot_embedding, dense_params) {
        Ok(v) => v,
        Err(e) => return Err(abort(e, trace)),
    };
    Ok(DenseOutcome {
        query_embedding,
        intermediate,
        final_embedding,
        cot,
        table,
        trace,
        exhausted,
    })
}

fn describe<S: Scalar>(table: &TermWeightTable<S>) -> String {
    let terms: Vec<String> = table.iter().map(|(t, w)| format!("{t}:{w}")).collect();
    format!("E(q) + [{}]", terms.join(", "))
}
