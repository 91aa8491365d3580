use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::retriever::{rank_order, ScoredDoc};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

/// Ranked lists per query, in TREC run format:
/// `<query_id> Q0 <doc_id> <rank> <score> <tag>`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunFile {
    pub tag: String,
    rankings: BTreeMap<String, Vec<RunEntry>>,
}

impl RunFile {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            rankings: BTreeMap::new(),
        }
    }

    /// Stores a ranked list (best first); ranks are assigned 1.. in order.
    pub fn insert<S: Scalar>(&mut self, query_id: &str, docs: &[ScoredDoc<S>]) {
        let entries = docs
            .iter()
            .enumerate()
            .map(|(i, d)| RunEntry {
                doc_id: d.doc_id.clone(),
                rank: i + 1,
                score: d.score.as_f64(),
            })
            .collect();
        self.rankings.insert(query_id.to_string(), entries);
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), path)
    }

    /// Lines are regrouped per query and reordered by descending score
    /// (ties by doc id), as trec_eval does; ranks are then renumbered.
    pub fn parse(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let mut run = Self::default();
        let mut raw: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 6 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected 6 columns, found {}", fields.len()),
                ));
            }
            fields[3]
                .parse::<usize>()
                .map_err(|_| Error::parse(origin, lineno, format!("bad rank {:?}", fields[3])))?;
            let score: f64 = fields[4]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::parse(origin, lineno, format!("bad score {:?}", fields[4])))?;
            if run.tag.is_empty() {
                run.tag = fields[5].to_string();
            }
            let list = raw.entry(fields[0].to_string()).or_default();
            if list.iter().any(|(d, _)| d == fields[2]) {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("doc {} listed twice for query {}", fields[2], fields[0]),
                ));
            }
            list.push((fields[2].to_string(), score));
        }
        for (qid, mut list) in raw {
            list.sort_by(|a, b| rank_order((a.0.as_str(), a.1), (b.0.as_str(), b.1)));
            let entries = list
                .into_iter()
                .enumerate()
                .map(|(i, (doc_id, score))| RunEntry {
                    doc_id,
                    rank: i + 1,
                    score,
                })
                .collect();
            run.rankings.insert(qid, entries);
        }
        Ok(run)
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        let tag = if self.tag.is_empty() { "run" } else { &self.tag };
        for (qid, entries) in &self.rankings {
            for e in entries {
                writeln!(out, "{qid} Q0 {} {} {} {tag}", e.doc_id, e.rank, e.score)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}
