//! Cost-metered access to a retriever.
//!
//! Every query runs in its own [`RetrievalSession`]. A document is charged the
//! first time the session receives it and never again, no matter how often
//! later (possibly expanded) queries return it.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retriever::{Retriever, ScoredDoc};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct RetrievalSession {
    query_id: String,
    unit_cost: f64,
    seen: HashSet<String>,
    /// Charged documents in the order they were first returned.
    charged_order: Vec<String>,
    open: bool,
}

impl RetrievalSession {
    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn unit_cost(&self) -> f64 {
        self.unit_cost
    }

    pub fn seen(&self) -> &HashSet<String> {
        &self.seen
    }

    pub fn charged_order(&self) -> &[String] {
        &self.charged_order
    }

    pub fn docs_charged(&self) -> usize {
        self.seen.len()
    }

    pub fn charge(&self) -> f64 {
        self.unit_cost * self.seen.len() as f64
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    /// Marks the returned documents as seen; returns how many were new.
    fn absorb<'a>(&mut self, ids: impl IntoIterator<Item = &'a str>) -> usize {
        let mut fresh = 0;
        for id in ids {
            if self.seen.insert(id.to_string()) {
                self.charged_order.push(id.to_string());
                fresh += 1;
            }
        }
        fresh
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval<S> {
    pub docs: Vec<ScoredDoc<S>>,
    pub newly_charged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryCost {
    pub docs_charged: usize,
    pub charge: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostReport {
    pub per_query: BTreeMap<String, QueryCost>,
    pub total_charge: f64,
}

impl CostReport {
    pub fn total_docs_charged(&self) -> usize {
        self.per_query.values().map(|c| c.docs_charged).sum()
    }

    pub fn mean_charge(&self) -> f64 {
        if self.per_query.is_empty() {
            0.0
        } else {
            self.total_charge / self.per_query.len() as f64
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Wraps a retriever and bills each session per unique document returned.
pub struct MeteredGateway<R> {
    retriever: R,
    ledger: Mutex<BTreeMap<String, QueryCost>>,
}

impl<R> MeteredGateway<R> {
    pub fn new(retriever: R) -> Self {
        Self {
            retriever,
            ledger: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn retriever(&self) -> &R {
        &self.retriever
    }

    /// Opens the session for `query_id`. Each query id may be opened once
    /// per gateway (one gateway per run).
    pub fn open_session(&self, query_id: &str, unit_cost: f64) -> Result<RetrievalSession> {
        if !(unit_cost >= 0.0 && unit_cost.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "unit cost must be a non-negative number, got {unit_cost}"
            )));
        }
        let mut ledger = self.ledger.lock().expect("ledger lock poisoned");
        if ledger.contains_key(query_id) {
            return Err(Error::SessionAlreadyOpen(query_id.to_string()));
        }
        ledger.insert(query_id.to_string(), QueryCost::default());
        Ok(RetrievalSession {
            query_id: query_id.to_string(),
            unit_cost,
            seen: HashSet::new(),
            charged_order: Vec::new(),
            open: true,
        })
    }

    pub fn close_session(&self, session: &mut RetrievalSession) {
        self.record(session);
        session.open = false;
    }

    fn record(&self, session: &RetrievalSession) {
        let mut ledger = self.ledger.lock().expect("ledger lock poisoned");
        ledger.insert(
            session.query_id.clone(),
            QueryCost {
                docs_charged: session.docs_charged(),
                charge: session.charge(),
            },
        );
    }

    pub fn ledger_report(&self) -> CostReport {
        let ledger = self.ledger.lock().expect("ledger lock poisoned");
        CostReport {
            per_query: ledger.clone(),
            total_charge: ledger.values().map(|c| c.charge).sum(),
        }
    }

    fn check_open(session: &RetrievalSession) -> Result<()> {
        if session.open {
            Ok(())
        } else {
            Err(Error::SessionClosed(session.query_id.clone()))
        }
    }

    /// Plain top-`k` retrieval; only documents unseen by this session are
    /// charged.
    pub fn retrieve<S>(
        &self,
        session: &mut RetrievalSession,
        query: &R::Query,
        k: usize,
    ) -> Result<Retrieval<S>>
    where
        S: Scalar,
        R: Retriever<S>,
    {
        Self::check_open(session)?;
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let docs = self.retriever.retrieve(query, k, &HashSet::new())?;
        let newly_charged = session.absorb(docs.iter().map(|d| d.doc_id.as_str()));
        self.record(session);
        Ok(Retrieval {
            docs,
            newly_charged,
        })
    }

    /// The best-ranked document this session has not seen yet, if any.
    ///
    /// Asks the retriever for up to `budget_k` candidates with the seen set
    /// excluded, or over-fetches `budget_k + |seen|` when the retriever cannot
    /// exclude. Charges at most one document.
    pub fn retrieve_top_new<S>(
        &self,
        session: &mut RetrievalSession,
        query: &R::Query,
        budget_k: usize,
    ) -> Result<Option<ScoredDoc<S>>>
    where
        S: Scalar,
        R: Retriever<S>,
    {
        Self::check_open(session)?;
        let budget = budget_k.max(1);
        let candidates = if self.retriever.supports_exclusion() {
            self.retriever.retrieve(query, budget, &session.seen)?
        } else {
            self.retriever
                .retrieve(query, budget + session.seen.len(), &HashSet::new())?
        };
        let pick = candidates
            .into_iter()
            .find(|d| !session.seen.contains(&d.doc_id));
        if let Some(doc) = &pick {
            session.absorb([doc.doc_id.as_str()]);
            self.record(session);
        }
        Ok(pick)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Returns a fixed list per query string, ignoring exclusion if told to.
    struct Scripted {
        exclusion: bool,
    }

    impl Retriever<f64> for Scripted {
        type Query = Vec<&'static str>;

        fn retrieve(
            &self,
            query: &Self::Query,
            k: usize,
            exclude: &HashSet<String>,
        ) -> Result<Vec<ScoredDoc<f64>>> {
            Ok(query
                .iter()
                .enumerate()
                .filter(|(_, d)| !self.exclusion || !exclude.contains(**d))
                .take(k)
                .map(|(i, d)| ScoredDoc {
                    doc_id: d.to_string(),
                    score: 10.0 - i as f64,
                })
                .collect())
        }

        fn supports_exclusion(&self) -> bool {
            self.exclusion
        }
    }

    fn gw(exclusion: bool) -> MeteredGateway<Scripted> {
        MeteredGateway::new(Scripted { exclusion })
    }

    #[test]
    fn open_session_starts_empty() {
        let g = gw(true);
        let s = g.open_session("q1", 0.1).unwrap();
        assert_eq!(s.charge(), 0.0);
        let free = g.open_session("q2", 0.0).unwrap();
        assert_eq!(free.unit_cost(), 0.0);
        assert!(matches!(g.open_session("q1", 0.1), Err(Error::SessionAlreadyOpen(_))));
        assert!(g.open_session("q3", -1.0).is_err());
    }

    #[test]
    fn repeat_retrieval_is_free() {
        let g = gw(true);
        let mut s = g.open_session("q1", 1.0).unwrap();
        let a = g.retrieve::<f64>(&mut s, &vec!["d1"], 1).unwrap();
        let b = g.retrieve::<f64>(&mut s, &vec!["d1"], 1).unwrap();
        assert_eq!((a.newly_charged, b.newly_charged), (1, 0));
        assert_eq!(s.charge(), 1.0);
    }

    #[test]
    fn overlapping_results_charge_the_difference() {
        let g = gw(true);
        let mut s = g.open_session("q1", 1.0).unwrap();
        let a = g.retrieve::<f64>(&mut s, &vec!["d1", "d2"], 2).unwrap();
        let b = g.retrieve::<f64>(&mut s, &vec!["d2", "d3"], 2).unwrap();
        assert_eq!((a.newly_charged, b.newly_charged), (2, 1));
    }

    #[test]
    fn five_unique_docs_at_ten_cents() {
        let g = gw(true);
        let mut s = g.open_session("q1", 0.1).unwrap();
        g.retrieve::<f64>(&mut s, &vec!["a", "b", "c"], 3).unwrap();
        g.retrieve::<f64>(&mut s, &vec!["c", "d", "e"], 3).unwrap();
        assert!((s.charge() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn top_new_walks_the_ranking() {
        for exclusion in [true, false] {
            let g = gw(exclusion);
            let mut s = g.open_session("q1", 1.0).unwrap();
            let q = vec!["d3", "d1", "d2"];
            let mut order = Vec::new();
            while let Some(d) = g.retrieve_top_new::<f64>(&mut s, &q, 1).unwrap() {
                order.push(d.doc_id);
            }
            assert_eq!(order, ["d3", "d1", "d2"], "exclusion={exclusion}");
            assert_eq!(s.docs_charged(), 3);
        }
    }

    #[test]
    fn closed_session_rejects_calls() {
        let g = gw(true);
        let mut s = g.open_session("q1", 1.0).unwrap();
        g.close_session(&mut s);
        assert!(matches!(
            g.retrieve::<f64>(&mut s, &vec!["d1"], 1),
            Err(Error::SessionClosed(_))
        ));
        assert!(g.retrieve::<f64>(&mut g.open_session("q2", 1.0).unwrap(), &vec!["d1"], 0).is_err());
    }

    #[test]
    fn ledger_totals() {
        let g = gw(true);
        assert_eq!(g.ledger_report().total_charge, 0.0);
        for qid in ["q1", "q2"] {
            let mut s = g.open_session(qid, 0.1).unwrap();
            g.retrieve::<f64>(&mut s, &vec!["a", "b", "c", "d", "e"], 5).unwrap();
            g.close_session(&mut s);
        }
        g.open_session("q3", 0.1).unwrap();
        let report = g.ledger_report();
        assert!((report.total_charge - 1.0).abs() < 1e-12);
        assert_eq!(report.per_query["q3"], QueryCost::default());
        assert_eq!(report.total_docs_charged(), 10);
    }
}
