use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{RunEntry, RunFile};
use crate::corpus::QrelSet;
use crate::error::{Error, Result};

/// `1/rank` of the first relevant document within the top `k`, else 0.
pub fn reciprocal_rank(ranking: &[RunEntry], qrels: &QrelSet, query_id: &str, k: usize) -> f64 {
    ranking
        .iter()
        .take(k)
        .position(|e| qrels.is_relevant(query_id, &e.doc_id))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Fraction of the query's relevant documents found in the top `k`; `None`
/// when the query has no relevant documents.
pub fn recall_at_k(ranking: &[RunEntry], qrels: &QrelSet, query_id: &str, k: usize) -> Option<f64> {
    let relevant: BTreeSet<&str> = qrels.relevant_docs(query_id).into_iter().collect();
    if relevant.is_empty() {
        return None;
    }
    let hits = ranking
        .iter()
        .take(k)
        .filter(|e| relevant.contains(e.doc_id.as_str()))
        .count();
    Some(hits as f64 / relevant.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub reciprocal_rank: f64,
    /// Recall per cutoff; absent for queries with no relevant documents.
    pub recall: BTreeMap<usize, f64>,
    /// Whether any relevant document appears within each cutoff.
    pub hit: BTreeMap<usize, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mrr_cutoff: usize,
    pub mrr: f64,
    /// Mean recall per cutoff over queries with at least one relevant document.
    pub recall: BTreeMap<usize, f64>,
    /// Judged queries (the MRR denominator).
    pub num_queries: usize,
    /// Queries with at least one relevant document (the recall denominator).
    pub num_recall_queries: usize,
    pub per_query: BTreeMap<String, QueryMetrics>,
}

impl MetricsReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.get(&k).copied()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Scores `run` against `qrels`. Every judged query counts (a query the run
/// does not answer scores 0); run queries without judgments are skipped with a
/// warning. Unjudged documents are non-relevant.
pub fn evaluate(run: &RunFile, qrels: &QrelSet, mrr_cutoff: usize, recall_cutoffs: &[usize]) -> MetricsReport {
    let judged = qrels.judged_queries();
    let unknown: Vec<&str> = run.query_ids().filter(|q| !judged.contains(q)).collect();
    if !unknown.is_empty() {
        warn!(count = unknown.len(), first = unknown[0], "run contains queries without judgments; ignored");
    }

    let mut per_query = BTreeMap::new();
    let mut rr_sum = 0.0;
    let mut recall_sum: BTreeMap<usize, f64> = recall_cutoffs.iter().map(|&k| (k, 0.0)).collect();
    let mut recall_queries = 0;
    for &qid in &judged {
        let ranking = run.ranking(qid).unwrap_or(&[]);
        let rr = reciprocal_rank(ranking, qrels, qid, mrr_cutoff);
        rr_sum += rr;
        let mut recall = BTreeMap::new();
        let mut hit = BTreeMap::new();
        for &k in recall_cutoffs {
            let r = recall_at_k(ranking, qrels, qid, k);
            hit.insert(k, r.is_some_and(|r| r > 0.0));
            if let Some(r) = r {
                recall.insert(k, r);
                *recall_sum.get_mut(&k).expect("cutoff registered") += r;
            }
        }
        if !qrels.relevant_docs(qid).is_empty() {
            recall_queries += 1;
        }
        per_query.insert(
            qid.to_string(),
            QueryMetrics {
                reciprocal_rank: rr,
                recall,
                hit,
            },
        );
    }

    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    MetricsReport {
        mrr_cutoff,
        mrr: mean(rr_sum, judged.len()),
        recall: recall_sum
            .into_iter()
            .map(|(k, s)| (k, mean(s, recall_queries)))
            .collect(),
        num_queries: judged.len(),
        num_recall_queries: recall_queries,
        per_query,
    }
}

pub fn evaluate_run(
    run_path: impl AsRef<Path>,
    qrels_path: impl AsRef<Path>,
    threshold: u32,
    mrr_cutoff: usize,
    recall_cutoffs: &[usize],
) -> Result<MetricsReport> {
    let run = RunFile::load(run_path)?;
    let qrels = QrelSet::load(qrels_path, threshold)?;
    Ok(evaluate(&run, &qrels, mrr_cutoff, recall_cutoffs))
}
