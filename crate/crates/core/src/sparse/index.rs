use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Tokenizer, WeightedQuery};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::retriever::{rank_order, Retriever, ScoredDoc};
use crate::scalar::Scalar;

pub const INDEX_FORMAT_VERSION: u32 = 1;
const INDEX_FORMAT_NAME: &str = "proqe-bm25";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params<S> {
    pub k1: S,
    pub b: S,
}

impl<S: Scalar> Default for Bm25Params<S> {
    fn default() -> Self {
        Self {
            k1: S::of(0.9),
            b: S::of(0.4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position in the index's ascending `doc_ids`.
    pub doc: u32,
    pub tf: u32,
}

/// Okapi BM25 over an immutable inverted index.
///
/// Documents are numbered in ascending doc_id order, so posting lists sorted
/// by number are also sorted by id and numeric tie-breaks match id order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvertedIndex<S> {
    tokenizer: Tokenizer,
    params: Bm25Params<S>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
    /// Per-document `(term, tf)` sorted by term.
    term_vectors: Vec<Vec<(String, u32)>>,
    avg_doc_length: S,
    #[serde(skip)]
    id_lookup: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile<S> {
    format: String,
    version: u32,
    index: InvertedIndex<S>,
}

impl<S: Scalar> InvertedIndex<S> {
    pub fn build(corpus: &Corpus, tokenizer: Tokenizer, params: Bm25Params<S>) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if params.k1 < S::zero() || params.b < S::zero() || params.b > S::one() {
            return Err(Error::InvalidArgument(format!(
                "bm25 parameters out of range: k1={}, b={}",
                params.k1, params.b
            )));
        }
        let mut docs: Vec<_> = corpus.iter().collect();
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut doc_lengths = Vec::with_capacity(docs.len());
        let mut term_vectors = Vec::with_capacity(docs.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (n, doc) in docs.iter().enumerate() {
            let tokens = tokenizer.tokenize(&doc.text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in &tf {
                postings.entry(term.clone()).or_default().push(Posting {
                    doc: n as u32,
                    tf: *count,
                });
            }
            doc_ids.push(doc.doc_id.clone());
            doc_lengths.push(tokens.len() as u32);
            term_vectors.push(tf.into_iter().collect());
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        if total == 0 {
            return Err(Error::InvalidArgument(
                "corpus has no indexable tokens".into(),
            ));
        }
        let avg_doc_length = S::of(total as f64) / S::of_usize(doc_ids.len());
        let mut index = Self {
            tokenizer,
            params,
            doc_ids,
            doc_lengths,
            postings,
            term_vectors,
            avg_doc_length,
            id_lookup: HashMap::new(),
        };
        index.rebuild_lookup();
        Ok(index)
    }

    fn rebuild_lookup(&mut self) {
        self.id_lookup = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn params(&self) -> Bm25Params<S> {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> S {
        self.avg_doc_length
    }

    /// Document ids, ascending.
    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.id_lookup.contains_key(doc_id)
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.id_lookup
            .get(doc_id)
            .map(|&n| self.doc_lengths[n as usize])
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    /// `(doc_id, tf)` pairs for `term`, ascending by doc_id.
    pub fn postings_by_id(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings(term)
            .iter()
            .map(|p| (self.doc_ids[p.doc as usize].as_str(), p.tf))
            .collect()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn vocabulary_len(&self) -> usize {
        self.postings.len()
    }

    /// `(term, tf)` for a document, sorted by term.
    pub fn term_vector(&self, doc_id: &str) -> Option<&[(String, u32)]> {
        self.id_lookup
            .get(doc_id)
            .map(|&n| self.term_vectors[n as usize].as_slice())
    }

    /// Lucene BM25 idf: `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, term: &str) -> S {
        let n = S::of_usize(self.doc_count());
        let df = S::of_usize(self.doc_freq(term));
        let half = S::of(0.5);
        (S::one() + (n - df + half) / (df + half)).ln()
    }

    fn term_score(&self, idf: S, tf: u32, doc_len: u32) -> S {
        let Bm25Params { k1, b } = self.params;
        let tf = S::of(f64::from(tf));
        let norm = S::one() - b + b * S::of(f64::from(doc_len)) / self.avg_doc_length;
        idf * (tf * (k1 + S::one())) / (tf + k1 * norm)
    }

    pub fn bm25_score(&self, query: &WeightedQuery<S>, doc_id: &str) -> Result<S> {
        let n = *self
            .id_lookup
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocId(doc_id.to_string()))?;
        let len = self.doc_lengths[n as usize];
        let vector = &self.term_vectors[n as usize];
        let mut score = S::zero();
        for (term, weight) in query.terms() {
            if let Ok(pos) = vector.binary_search_by(|(t, _)| t.as_str().cmp(term)) {
                score = score + weight * self.term_score(self.idf(term), vector[pos].1, len);
            }
        }
        Ok(score)
    }

    /// Top-`k` documents containing at least one query term, by descending
    /// score with ties broken by ascending doc_id.
    pub fn search(
        &self,
        query: &WeightedQuery<S>,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Vec<ScoredDoc<S>> {
        if k == 0 {
            return Vec::new();
        }
        let mut acc: HashMap<u32, S> = HashMap::new();
        for (term, weight) in query.terms() {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for p in postings {
                let contrib = weight * self.term_score(idf, p.tf, self.doc_lengths[p.doc as usize]);
                let slot = acc.entry(p.doc).or_insert_with(S::zero);
                *slot = *slot + contrib;
            }
        }
        let mut hits: Vec<(u32, S)> = acc
            .into_iter()
            .filter(|(doc, _)| !exclude.contains(&self.doc_ids[*doc as usize]))
            .collect();
        let cmp = |a: &(u32, S), b: &(u32, S)| {
            rank_order(
                (self.doc_ids[a.0 as usize].as_str(), a.1),
                (self.doc_ids[b.0 as usize].as_str(), b.1),
            )
        };
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, cmp);
            hits.truncate(k);
        }
        hits.sort_by(cmp);
        hits.into_iter()
            .map(|(doc, score)| ScoredDoc {
                doc_id: self.doc_ids[doc as usize].clone(),
                score,
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let wrapper = IndexFile {
            format: INDEX_FORMAT_NAME.to_string(),
            version: INDEX_FORMAT_VERSION,
            index: self.clone(),
        };
        serde_json::to_writer(BufWriter::new(file), &wrapper)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let wrapper: IndexFile<S> = serde_json::from_reader(BufReader::new(file))?;
        if wrapper.format != INDEX_FORMAT_NAME || wrapper.version != INDEX_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported index file {} v{}",
                wrapper.format, wrapper.version
            )));
        }
        let mut index = wrapper.index;
        index.rebuild_lookup();
        Ok(index)
    }
}

impl<S: Scalar> Retriever<S> for InvertedIndex<S> {
    type Query = WeightedQuery<S>;

    fn retrieve(
        &self,
        query: &WeightedQuery<S>,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<ScoredDoc<S>>> {
        Ok(self.search(query, k, exclude))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TokenizerConfig;

    fn plain_tokenizer() -> Tokenizer {
        Tokenizer::new(TokenizerConfig::default().with_stopwords(Vec::<String>::new()))
    }

    fn ab_bc() -> InvertedIndex<f64> {
        let corpus = Corpus::from_pairs([("d1", "a b"), ("d2", "b c")]).unwrap();
        InvertedIndex::build(&corpus, plain_tokenizer(), Bm25Params::default()).unwrap()
    }

    fn q(pairs: &[(&str, f64)]) -> WeightedQuery<f64> {
        WeightedQuery::from_weights("", pairs.iter().copied())
    }

    #[test]
    fn postings_and_lengths() {
        let idx = ab_bc();
        assert_eq!(idx.postings_by_id("b"), vec![("d1", 1), ("d2", 1)]);
        assert_eq!(idx.avg_doc_length(), 2.0);
        assert_eq!(idx.doc_count(), 2);
    }

    #[test]
    fn single_doc_corpus() {
        let corpus = Corpus::from_pairs([("only", "x y z")]).unwrap();
        let idx = InvertedIndex::<f64>::build(&corpus, plain_tokenizer(), Bm25Params::default()).unwrap();
        assert_eq!(idx.doc_count(), 1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let r = InvertedIndex::<f64>::build(&Corpus::new(), plain_tokenizer(), Bm25Params::default());
        assert!(matches!(r, Err(Error::EmptyCorpus)));
    }

    #[test]
    fn hand_evaluated_score() {
        // N=2, df(a)=1: idf = ln(1 + 1.5/1.5) = ln 2
        // tf=1, len=2, avg=2: norm = 1, tf part = 1.9 / 1.9 = 1
        let idx = ab_bc();
        let expected = (2.0f64).ln();
        let got = idx.bm25_score(&q(&[("a", 1.0)]), "d1").unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert_eq!(idx.bm25_score(&q(&[("a", 1.0)]), "d2").unwrap(), 0.0);
    }

    #[test]
    fn weight_is_linear() {
        let idx = ab_bc();
        let one = idx.bm25_score(&q(&[("b", 1.0)]), "d1").unwrap();
        let two = idx.bm25_score(&q(&[("b", 2.0)]), "d1").unwrap();
        assert!((two - 2.0 * one).abs() < 1e-12);
    }

    #[test]
    fn unknown_doc() {
        assert!(matches!(
            ab_bc().bm25_score(&q(&[("a", 1.0)]), "zz"),
            Err(Error::UnknownDocId(_))
        ));
    }

    #[test]
    fn search_ties_and_exclusion() {
        let idx = ab_bc();
        let hits = idx.search(&q(&[("b", 1.0)]), 10, &HashSet::new());
        assert_eq!(hits.iter().map(|h| h.doc_id.as_str()).collect::<Vec<_>>(), ["d1", "d2"]);
        assert_eq!(hits[0].score, hits[1].score);

        let exclude: HashSet<String> = ["d1".to_string(), "d2".to_string()].into();
        assert!(idx.search(&q(&[("b", 1.0)]), 10, &exclude).is_empty());

        let top = idx.search(&q(&[("c", 1.0), ("b", 1.0)]), 1, &HashSet::new());
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].doc_id, "d2");
    }

    #[test]
    fn fewer_matches_than_k() {
        let idx = ab_bc();
        assert_eq!(idx.search(&q(&[("a", 1.0)]), 5, &HashSet::new()).len(), 1);
        assert!(idx.search(&q(&[("zzz", 1.0)]), 5, &HashSet::new()).is_empty());
    }

    #[test]
    fn save_and_load() {
        let idx = ab_bc();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.json");
        idx.save(&path).unwrap();
        let back = InvertedIndex::<f64>::load(&path).unwrap();
        let query = q(&[("b", 1.0), ("c", 0.5)]);
        assert_eq!(
            back.search(&query, 5, &HashSet::new()),
            idx.search(&query, 5, &HashSet::new())
        );
        assert!(back.contains("d2"));
    }

    #[test]
    fn works_in_f32() {
        let corpus = Corpus::from_pairs([("d1", "a b"), ("d2", "b c")]).unwrap();
        let idx = InvertedIndex::<f32>::build(&corpus, plain_tokenizer(), Bm25Params::default()).unwrap();
        let s = idx
            .bm25_score(&WeightedQuery::from_weights("", [("a", 1.0f32)]), "d1")
            .unwrap();
        assert!((s - 2f32.ln()).abs() < 1e-6);
    }
}
