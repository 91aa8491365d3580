//! Batch runs: one metered session per query, queries processed in parallel,
//! a ranked run file plus cost report and per-query traces at the end.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::corpus::{Corpus, QrelSet, QueryRecord};
use crate::dense::{run_proqe_dense, DenseParams, Embedding, Encoder, VectorIndex};
use crate::error::{Error, Result};
use crate::eval::{evaluate, RunFile};
use crate::expansion::{
    cot_expand, query2doc_expand, rm3_from_feedback, rocchio_from_feedback, run_proqe_sparse,
    IterationRecord, ProqeParams, Rm3Params, RocchioParams,
};
use crate::gateway::{CostReport, MeteredGateway, RetrievalSession};
use crate::llm::LanguageModel;
use crate::retriever::ScoredDoc;
use crate::scalar::Scalar;
use crate::sparse::{InvertedIndex, Tokenizer, WeightedQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bm25,
    Rm3,
    Rocchio,
    Cot,
    Query2doc,
    Proqe,
    Dense,
    ProqeDense,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Bm25,
        Method::Rm3,
        Method::Rocchio,
        Method::Cot,
        Method::Query2doc,
        Method::Proqe,
        Method::Dense,
        Method::ProqeDense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bm25 => "bm25",
            Method::Rm3 => "rm3",
            Method::Rocchio => "rocchio",
            Method::Cot => "cot",
            Method::Query2doc => "query2doc",
            Method::Proqe => "proqe",
            Method::Dense => "dense",
            Method::ProqeDense => "proqe-dense",
        }
    }

    pub fn is_dense(self) -> bool {
        matches!(self, Method::Dense | Method::ProqeDense)
    }

    pub fn uses_llm(self) -> bool {
        matches!(
            self,
            Method::Cot | Method::Query2doc | Method::Proqe | Method::ProqeDense
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('-', "_") == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig<S> {
    pub method: Method,
    /// Depth of the final ranking written to the run file.
    pub depth: usize,
    /// Charge per unique document; 0 is free retrieval.
    pub unit_cost: f64,
    pub proqe: ProqeParams<S>,
    pub dense: DenseParams<S>,
    pub rm3: Rm3Params<S>,
    pub rocchio: RocchioParams<S>,
    /// Worker threads over queries; 0 picks the available parallelism.
    pub threads: usize,
}

impl<S: Scalar> RunConfig<S> {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            depth: 20,
            unit_cost: 0.0,
            proqe: ProqeParams::default(),
            dense: DenseParams::default(),
            rm3: Rm3Params::default(),
            rocchio: RocchioParams::default(),
            threads: 0,
        }
    }
}

/// What happened to one query, for audit and replay.
#[derive(Debug, Clone, Serialize)]
pub struct QueryTrace<S> {
    pub query_id: String,
    pub method: Method,
    /// Text form of the query used for the final ranking.
    pub final_query: String,
    pub iterations: Vec<IterationRecord<S>>,
    pub generated: Option<String>,
    pub exhausted: bool,
    /// Charge accrued before the final retrieval (feedback or the loop).
    pub expansion_charge: f64,
    pub expansion_docs: usize,
    pub docs_charged: usize,
    pub charge: f64,
    pub error: Option<String>,
}

impl<S> QueryTrace<S> {
    fn new(query_id: &str, method: Method) -> Self {
        Self {
            query_id: query_id.to_string(),
            method,
            final_query: String::new(),
            iterations: Vec::new(),
            generated: None,
            exhausted: false,
            expansion_charge: 0.0,
            expansion_docs: 0,
            docs_charged: 0,
            charge: 0.0,
            error: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput<S> {
    pub run: RunFile,
    pub cost: CostReport,
    /// In input query order.
    pub traces: Vec<QueryTrace<S>>,
}

impl<S: Scalar> RunOutput<S> {
    pub fn failures(&self) -> impl Iterator<Item = &QueryTrace<S>> {
        self.traces.iter().filter(|t| t.error.is_some())
    }

    pub fn mean_expansion_charge(&self) -> f64 {
        self.mean(|t| t.expansion_charge)
    }

    pub fn mean_expansion_docs(&self) -> f64 {
        self.mean(|t| t.expansion_docs as f64)
    }

    fn mean(&self, f: impl Fn(&QueryTrace<S>) -> f64) -> f64 {
        if self.traces.is_empty() {
            return 0.0;
        }
        self.traces.iter().map(f).sum::<f64>() / self.traces.len() as f64
    }

    pub fn write_traces(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut out, &self.traces)?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Maps `f` over `items` on up to `threads` workers, keeping input order.
fn par_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = match threads {
        0 => thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(items.len())
    .max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

fn check_unique(queries: &[QueryRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for q in queries {
        if !seen.insert(q.query_id.as_str()) {
            return Err(Error::DuplicateQueryId(q.query_id.clone()));
        }
    }
    Ok(())
}

/// Drives one query through a session and fills in the trace. The closure
/// returns the final ranking; errors end up in the trace.
fn run_one<S, R, F>(
    gateway: &MeteredGateway<R>,
    query: &QueryRecord,
    config: &RunConfig<S>,
    body: F,
) -> (QueryTrace<S>, Option<Vec<ScoredDoc<S>>>)
where
    S: Scalar,
    F: FnOnce(&mut RetrievalSession, &mut QueryTrace<S>) -> Result<Vec<ScoredDoc<S>>>,
{
    let mut trace = QueryTrace::new(&query.query_id, config.method);
    let mut session = match gateway.open_session(&query.query_id, config.unit_cost) {
        Ok(s) => s,
        Err(e) => {
            trace.error = Some(e.to_string());
            return (trace, None);
        }
    };
    let ranking = match body(&mut session, &mut trace) {
        Ok(r) => Some(r),
        Err(e) => {
            warn!(query = %query.query_id, error = %e, "query failed");
            trace.error = Some(e.to_string());
            None
        }
    };
    gateway.close_session(&mut session);
    trace.docs_charged = session.docs_charged();
    trace.charge = session.charge();
    debug!(query = %query.query_id, charge = trace.charge, "query done");
    (trace, ranking)
}

type QueryResult<S> = (QueryTrace<S>, Option<Vec<ScoredDoc<S>>>);

fn collect<S: Scalar, R>(
    gateway: MeteredGateway<R>,
    method: Method,
    results: Vec<QueryResult<S>>,
) -> RunOutput<S> {
    let mut run = RunFile::new(method.name());
    let mut traces = Vec::with_capacity(results.len());
    for (trace, ranking) in results {
        if let Some(ranking) = ranking {
            run.insert(&trace.query_id, &ranking);
        }
        traces.push(trace);
    }
    RunOutput {
        run,
        cost: gateway.ledger_report(),
        traces,
    }
}

/// Runs a sparse method (everything except the dense ones) over `queries`.
pub fn run_sparse<S, L>(
    queries: &[QueryRecord],
    corpus: &Corpus,
    index: &InvertedIndex<S>,
    llm: &L,
    config: &RunConfig<S>,
) -> Result<RunOutput<S>>
where
    S: Scalar,
    L: LanguageModel + ?Sized,
{
    if config.method.is_dense() {
        return Err(Error::InvalidArgument(format!(
            "{} needs a vector index",
            config.method
        )));
    }
    if config.depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    check_unique(queries)?;
    let gateway = MeteredGateway::new(index);
    let tokenizer = index.tokenizer();
    let alpha_reps = config.proqe.alpha_repetitions();

    let results = par_map(queries, config.threads, |query| {
        run_one(&gateway, query, config, |session, trace| {
            let final_query: WeightedQuery<S> = match config.method {
                Method::Bm25 => WeightedQuery::from_text(&query.text, tokenizer),
                Method::Rm3 | Method::Rocchio => {
                    let original = WeightedQuery::from_text(&query.text, tokenizer);
                    let fb_docs = match config.method {
                        Method::Rm3 => config.rm3.fb_docs,
                        _ => config.rocchio.fb_docs,
                    };
                    let feedback = gateway.retrieve(session, &original, fb_docs.max(1))?.docs;
                    match config.method {
                        Method::Rm3 => rm3_from_feedback(query, index, &feedback, &config.rm3),
                        _ => rocchio_from_feedback(query, index, &feedback, &config.rocchio),
                    }
                }
                Method::Cot | Method::Query2doc => {
                    let expanded = if config.method == Method::Cot {
                        cot_expand(query, llm, alpha_reps)?
                    } else {
                        query2doc_expand(query, llm, alpha_reps)?
                    };
                    trace.generated = expanded.appended.clone();
                    expanded.to_weighted(tokenizer)
                }
                Method::Proqe => {
                    let outcome = run_proqe_sparse(query, corpus, tokenizer, &gateway, session, llm, &config.proqe)
                        .map_err(|abort| {
                            trace.iterations = abort.trace;
                            abort.error
                        })?;
                    trace.iterations = outcome.trace;
                    trace.exhausted = outcome.exhausted;
                    trace.generated = Some(outcome.cot.text);
                    outcome.final_query.to_weighted(tokenizer)
                }
                Method::Dense | Method::ProqeDense => unreachable!("rejected above"),
            };
            trace.expansion_charge = session.charge();
            trace.expansion_docs = session.docs_charged();
            trace.final_query = render(&final_query);
            Ok(gateway.retrieve(session, &final_query, config.depth)?.docs)
        })
    });
    Ok(collect(gateway, config.method, results))
}

/// Runs `dense` or `proqe-dense` against a vector index.
#[allow(clippy::too_many_arguments)]
pub fn run_dense<S, L, E>(
    queries: &[QueryRecord],
    corpus: &Corpus,
    index: &VectorIndex<S>,
    encoder: &E,
    tokenizer: &Tokenizer,
    llm: &L,
    config: &RunConfig<S>,
) -> Result<RunOutput<S>>
where
    S: Scalar,
    L: LanguageModel + ?Sized,
    E: Encoder<S> + ?Sized,
{
    if !config.method.is_dense() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a dense method",
            config.method
        )));
    }
    if config.depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if encoder.dim() != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            actual: encoder.dim(),
        });
    }
    check_unique(queries)?;
    let gateway = MeteredGateway::new(index);

    let results = par_map(queries, config.threads, |query| {
        run_one(&gateway, query, config, |session, trace| {
            let embedding: Embedding<S> = if config.method == Method::Dense {
                trace.final_query = "E(q)".to_string();
                encoder.encode(&query.text)
            } else {
                let outcome = run_proqe_dense(
                    query,
                    corpus,
                    tokenizer,
                    &gateway,
                    session,
                    llm,
                    encoder,
                    &config.proqe,
                    &config.dense,
                )
                .map_err(|abort| {
                    trace.iterations = abort.trace;
                    abort.error
                })?;
                trace.iterations = outcome.trace;
                trace.exhausted = outcome.exhausted;
                trace.final_query = "E(q')".to_string();
                trace.generated = Some(outcome.cot.text);
                outcome.final_embedding
            };
            trace.expansion_charge = session.charge();
            trace.expansion_docs = session.docs_charged();
            Ok(gateway.retrieve(session, &embedding, config.depth)?.docs)
        })
    });
    Ok(collect(gateway, config.method, results))
}

fn render<S: Scalar>(q: &WeightedQuery<S>) -> String {
    let terms: Vec<String> = q.terms().map(|(t, w)| format!("{t}^{w}")).collect();
    terms.join(" ")
}

/// One row of an iteration sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub mrr: f64,
    pub recall_at_1: f64,
    /// Mean number of documents paid for by the expansion loop.
    pub mean_docs: f64,
    /// Mean charge of the expansion loop alone.
    pub mean_charge: f64,
    /// Mean charge including the final top-k retrieval.
    pub mean_total_charge: f64,
}

/// Reruns a method for each `n` in `n_values` and evaluates each run.
/// `run` receives the config with `proqe.n_iterations` set.
pub fn sweep_iterations<S, F>(
    base: &RunConfig<S>,
    n_values: &[usize],
    qrels: &QrelSet,
    mrr_cutoff: usize,
    mut run: F,
) -> Result<Vec<SweepRow>>
where
    S: Scalar,
    F: FnMut(&RunConfig<S>) -> Result<RunOutput<S>>,
{
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let mut config = *base;
        config.proqe.n_iterations = n;
        let out = run(&config)?;
        let report = evaluate(&out.run, qrels, mrr_cutoff, &[1]);
        rows.push(SweepRow {
            n,
            mrr: report.mrr,
            recall_at_1: report.recall_at(1).unwrap_or(0.0),
            mean_docs: out.mean_expansion_docs(),
            mean_charge: out.mean_expansion_charge(),
            mean_total_charge: out.cost.mean_charge(),
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("PROQE_DENSE".parse::<Method>().unwrap(), Method::ProqeDense);
        assert!("bm26".parse::<Method>().is_err());
    }

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<usize> = (0..100).collect();
        assert_eq!(par_map(&items, 7, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(par_map(&Vec::<usize>::new(), 0, |x| *x).is_empty());
    }

    #[test]
    fn sweep_csv_header() {
        let rows = [SweepRow {
            n: 1,
            mrr: 0.5,
            recall_at_1: 0.25,
            mean_docs: 1.0,
            mean_charge: 1.0,
            mean_total_charge: 20.0,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "n,mrr,recall_at_1,mean_docs,mean_charge,mean_total_charge\n1,0.5,0.25,1.0,1.0,20.0\n"
        );
    }
}
