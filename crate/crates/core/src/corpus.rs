//! Document collection, query set and relevance judgments.
//!
//! Everything here is loaded once and read-only afterwards. Text is kept
//! exactly as it appears on disk; normalization belongs to the tokenizer.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
}

impl QueryRecord {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CorpusStats {
    pub docs: usize,
    /// Whitespace-delimited tokens over all document bodies.
    pub tokens: usize,
}

/// In-memory document collection, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct JsonDoc {
    id: String,
    contents: String,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a corpus from `(id, text)` pairs, enforcing the same invariants
    /// as file ingestion.
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut corpus = Self::new();
        for (id, text) in pairs {
            corpus.push(Document {
                doc_id: id.into(),
                text: text.into(),
            })?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, doc: Document) -> Result<()> {
        if doc.text.trim().is_empty() {
            return Err(Error::InvalidArgument(format!(
                "document {} has empty text",
                doc.doc_id
            )));
        }
        if self.by_id.contains_key(&doc.doc_id) {
            return Err(Error::DuplicateDocId(doc.doc_id));
        }
        self.by_id.insert(doc.doc_id.clone(), self.docs.len());
        self.docs.push(doc);
        Ok(())
    }

    /// Loads a JSON-lines corpus (`{"id": .., "contents": ..}`). Lines that do
    /// not start with `{` are read as `id<TAB>text`.
    pub fn ingest(path: impl AsRef<Path>) -> Result<(Self, CorpusStats)> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::ingest_reader(BufReader::new(file), path)
    }

    pub fn ingest_reader(reader: impl BufRead, origin: &Path) -> Result<(Self, CorpusStats)> {
        let mut corpus = Self::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let doc = if trimmed.starts_with('{') {
                let raw: JsonDoc = serde_json::from_str(trimmed)
                    .map_err(|e| Error::parse(origin, lineno, format!("malformed record: {e}")))?;
                Document {
                    doc_id: raw.id,
                    text: raw.contents,
                }
            } else {
                let (id, text) = line
                    .split_once('\t')
                    .ok_or_else(|| Error::parse(origin, lineno, "expected JSON object or id<TAB>text"))?;
                Document {
                    doc_id: id.trim().to_string(),
                    text: text.to_string(),
                }
            };
            if doc.doc_id.is_empty() {
                return Err(Error::parse(origin, lineno, "empty doc_id"));
            }
            if doc.text.trim().is_empty() {
                return Err(Error::parse(origin, lineno, format!("empty text for {}", doc.doc_id)));
            }
            corpus.push(doc)?;
        }
        let stats = corpus.stats();
        if stats.docs == 0 {
            tracing::warn!(path = %origin.display(), "corpus file contains no documents");
        }
        Ok((corpus, stats))
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            docs: self.docs.len(),
            tokens: self.docs.iter().map(|d| d.text.split_whitespace().count()).sum(),
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }

    /// Canonical JSON-lines serialization, in load order.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for doc in &self.docs {
            let line = serde_json::json!({ "id": doc.doc_id, "contents": doc.text });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_queries(BufReader::new(file), path)
}

pub fn parse_queries(reader: impl BufRead, origin: &Path) -> Result<Vec<QueryRecord>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "missing tab between query_id and text"))?;
        let id = id.trim();
        let text = text.trim();
        if id.is_empty() || text.is_empty() {
            return Err(Error::parse(origin, lineno, "empty query_id or query text"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateQueryId(id.to_string()));
        }
        out.push(QueryRecord::new(id, text));
    }
    Ok(out)
}

pub fn write_queries(queries: &[QueryRecord], mut out: impl Write) -> std::io::Result<()> {
    for q in queries {
        writeln!(out, "{}\t{}", q.query_id, q.text)?;
    }
    Ok(())
}

/// Graded relevance judgments with a relevance threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrelSet {
    judgments: BTreeMap<(String, String), u32>,
    relevance_threshold: u32,
}

impl Default for QrelSet {
    fn default() -> Self {
        Self::new(1)
    }
}

impl QrelSet {
    pub fn new(relevance_threshold: u32) -> Self {
        Self {
            judgments: BTreeMap::new(),
            relevance_threshold,
        }
    }

    pub fn load(path: impl AsRef<Path>, threshold: u32) -> Result<Self> {
        let path = path.as_ref();
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, threshold, path)
    }

    /// Parses TREC qrels: `<query_id> <ignored> <doc_id> <grade>`.
    pub fn parse(text: &str, threshold: u32, origin: &Path) -> Result<Self> {
        let mut set = Self::new(threshold);
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected 4 columns, found {}", fields.len()),
                ));
            }
            let grade: u32 = fields[3].parse().map_err(|_| {
                Error::parse(
                    origin,
                    lineno,
                    format!("grade {:?} is not a non-negative integer", fields[3]),
                )
            })?;
            if !set.insert(fields[0], fields[2], grade) {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("pair ({}, {}) judged twice", fields[0], fields[2]),
                ));
            }
        }
        Ok(set)
    }

    /// Returns false if the pair was already judged (the first grade is kept).
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> bool {
        let key = (query_id.to_string(), doc_id.to_string());
        if self.judgments.contains_key(&key) {
            return false;
        }
        self.judgments.insert(key, grade);
        true
    }

    pub fn threshold(&self) -> u32 {
        self.relevance_threshold
    }

    pub fn with_threshold(mut self, threshold: u32) -> Self {
        self.relevance_threshold = threshold;
        self
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments
            .get(&(query_id.to_string(), doc_id.to_string()))
            .copied()
    }

    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> bool {
        self.grade(query_id, doc_id)
            .is_some_and(|g| g >= self.relevance_threshold)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn judgments(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments
            .iter()
            .map(|((q, d), g)| (q.as_str(), d.as_str(), *g))
    }

    /// Query ids with at least one judgment of any grade, ascending.
    pub fn judged_queries(&self) -> BTreeSet<&str> {
        self.judgments.keys().map(|(q, _)| q.as_str()).collect()
    }

    /// Relevant doc ids for a query, ascending.
    pub fn relevant_docs(&self, query_id: &str) -> Vec<&str> {
        self.judgments
            .range((query_id.to_string(), String::new())..)
            .take_while(|((q, _), _)| q == query_id)
            .filter(|(_, g)| **g >= self.relevance_threshold)
            .map(|((_, d), _)| d.as_str())
            .collect()
    }

    /// Judged doc ids missing from `corpus`. They stay in the set; the
    /// caller decides what to do with them.
    pub fn unknown_doc_ids(&self, corpus: &Corpus) -> BTreeSet<&str> {
        self.judgments
            .keys()
            .map(|(_, d)| d.as_str())
            .filter(|d| !corpus.contains(d))
            .collect()
    }

    pub fn write_trec(&self, mut out: impl Write) -> std::io::Result<()> {
        for ((q, d), g) in &self.judgments {
            writeln!(out, "{q} 0 {d} {g}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ingest_str(s: &str) -> Result<(Corpus, CorpusStats)> {
        Corpus::ingest_reader(Cursor::new(s), Path::new("mem"))
    }

    #[test]
    fn three_line_jsonl() {
        let (c, stats) = ingest_str(
            "{\"id\":\"d1\",\"contents\":\"alpha beta\"}\n\
             {\"id\":\"d2\",\"contents\":\"gamma\"}\n\
             {\"id\":\"d3\",\"contents\":\"delta epsilon zeta\"}\n",
        )
        .unwrap();
        assert_eq!(stats.docs, 3);
        assert_eq!(stats.tokens, 6);
        assert_eq!(c.get("d2").unwrap().text, "gamma");
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let (c, stats) = ingest_str("").unwrap();
        assert!(c.is_empty());
        assert_eq!(stats, CorpusStats::default());
    }

    #[test]
    fn duplicate_doc_id_rejected() {
        let err = ingest_str(
            "{\"id\":\"d1\",\"contents\":\"a\"}\n{\"id\":\"d1\",\"contents\":\"b\"}\n",
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "duplicate doc_id d1");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = ingest_str("{\"id\":\"d1\",\"contents\":\"a\"}\n{\"id\": 3\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tsv_fallback() {
        let (c, _) = ingest_str("d1\tfirst passage\nd2\tsecond one\n").unwrap();
        assert_eq!(c.get("d1").unwrap().text, "first passage");
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn blank_text_rejected() {
        assert!(ingest_str("{\"id\":\"d1\",\"contents\":\"   \"}\n").is_err());
    }

    #[test]
    fn qrels_threshold() {
        let q = QrelSet::parse("q1 0 d1 3\nq1 0 d2 2\nq1 0 d3 1\n", 3, Path::new("mem")).unwrap();
        assert!(q.is_relevant("q1", "d1"));
        assert!(!q.is_relevant("q1", "d2"));
        assert!(!q.is_relevant("q1", "d3"));
        let q = q.with_threshold(1);
        assert!(q.is_relevant("q1", "d3"));
        assert!(!q.is_relevant("q1", "missing"));
    }

    #[test]
    fn qrels_bad_grade_names_line() {
        let err = QrelSet::parse("q1 0 d1 1\nq1 0 d2 x\n", 1, Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = QrelSet::parse("q1 0 d1 -1\n", 1, Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn qrels_duplicate_pair_rejected() {
        assert!(QrelSet::parse("q1 0 d1 1\nq1 Q0 d1 2\n", 1, Path::new("mem")).is_err());
    }

    #[test]
    fn relevant_docs_are_scoped_to_query() {
        let q = QrelSet::parse(
            "q1 0 d2 1\nq1 0 d1 1\nq10 0 d9 1\nq2 0 d3 0\n",
            1,
            Path::new("mem"),
        )
        .unwrap();
        assert_eq!(q.relevant_docs("q1"), vec!["d1", "d2"]);
        assert!(q.relevant_docs("q2").is_empty());
        assert_eq!(q.judged_queries().len(), 3);
    }

    #[test]
    fn unknown_docs_are_kept_and_reported() {
        let corpus = Corpus::from_pairs([("d1", "x")]).unwrap();
        let q = QrelSet::parse("q1 0 d1 1\nq1 0 d7 1\n", 1, Path::new("mem")).unwrap();
        assert_eq!(q.unknown_doc_ids(&corpus).into_iter().collect::<Vec<_>>(), vec!["d7"]);
        assert!(q.is_relevant("q1", "d7"));
    }

    #[test]
    fn queries_tsv() {
        let qs = parse_queries(Cursor::new("q1\twho won 2016 election\n"), Path::new("mem")).unwrap();
        assert_eq!(qs, vec![QueryRecord::new("q1", "who won 2016 election")]);
        assert!(parse_queries(Cursor::new(""), Path::new("mem")).unwrap().is_empty());
        let err = parse_queries(Cursor::new("q1\ta\nq1\tb\n"), Path::new("mem")).unwrap_err();
        assert_eq!(err.to_string(), "duplicate query_id q1");
        let err = parse_queries(Cursor::new("q1\ta\nno tab here\n"), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
