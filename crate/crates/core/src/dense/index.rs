use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Embedding, Encoder};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::retriever::{rank_order, Retriever, ScoredDoc};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Similarity {
    #[default]
    Dot,
    Cosine,
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(Similarity::Dot),
            "cosine" | "cos" => Ok(Similarity::Cosine),
            other => Err(Error::InvalidArgument(format!("unknown similarity {other:?}"))),
        }
    }
}

impl Similarity {
    pub fn score<S: Scalar>(self, a: &Embedding<S>, b: &Embedding<S>) -> S {
        match self {
            Similarity::Dot => a.dot(b),
            Similarity::Cosine => a.cosine(b),
        }
    }
}

/// Exact (brute-force) vector index, doc ids ascending.
#[derive(Debug, Clone)]
pub struct VectorIndex<S> {
    dim: usize,
    similarity: Similarity,
    ids: Vec<String>,
    vectors: Vec<Embedding<S>>,
    lookup: HashMap<String, usize>,
}

impl<S: Scalar> VectorIndex<S> {
    pub fn new(dim: usize, similarity: Similarity) -> Self {
        Self {
            dim,
            similarity,
            ids: Vec::new(),
            vectors: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn from_vectors<I>(dim: usize, similarity: Similarity, items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Embedding<S>)>,
    {
        let mut pairs: Vec<(String, Embedding<S>)> = items.into_iter().collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let mut index = Self::new(dim, similarity);
        for (id, v) in pairs {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
            if index.lookup.insert(id.clone(), index.ids.len()).is_some() {
                return Err(Error::DuplicateDocId(id));
            }
            index.ids.push(id);
            index.vectors.push(v);
        }
        Ok(index)
    }

    pub fn build<E: Encoder<S> + ?Sized>(corpus: &Corpus, encoder: &E, similarity: Similarity) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Self::from_vectors(
            encoder.dim(),
            similarity,
            corpus.iter().map(|d| (d.doc_id.clone(), encoder.encode(&d.text))),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }

    pub fn with_similarity(mut self, similarity: Similarity) -> Self {
        self.similarity = similarity;
        self
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Embedding<S>> {
        self.lookup.get(doc_id).map(|&i| &self.vectors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Embedding<S>)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Reads `d=<dim>` followed by `<doc_id> <f1> … <fd>` lines.
    pub fn load(path: impl AsRef<Path>, similarity: Similarity) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let dim = loop {
            let Some((i, line)) = lines.next() else {
                return Err(Error::parse(path, 1, "missing d=<int> header"));
            };
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            break line
                .trim()
                .strip_prefix("d=")
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| Error::parse(path, i + 1, "expected header d=<positive int>"))?;
        };
        let mut items = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut fields = line.split_whitespace();
            let Some(id) = fields.next() else { continue };
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map(S::of)
                        .map_err(|_| Error::parse(path, i + 1, format!("bad number {f:?}")))
                })
                .collect::<Result<Vec<S>>>()?;
            if values.len() != dim {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {dim} components, found {}", values.len()),
                ));
            }
            let emb = Embedding::new(values).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            items.push((id.to_string(), emb));
        }
        Self::from_vectors(dim, similarity, items)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "d={}", self.dim).map_err(io)?;
        for (id, v) in self.iter() {
            write!(out, "{id}").map_err(io)?;
            for x in v.values() {
                write!(out, " {x}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Exact top-`k` by the index's similarity, descending, ties by doc id.
pub fn dense_search<S: Scalar>(
    index: &VectorIndex<S>,
    query: &Embedding<S>,
    k: usize,
    exclude: &HashSet<String>,
) -> Result<Vec<ScoredDoc<S>>> {
    if query.dim() != index.dim {
        return Err(Error::DimensionMismatch {
            expected: index.dim,
            actual: query.dim(),
        });
    }
    let mut scored: Vec<(usize, S)> = index
        .vectors
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(&index.ids[*i]))
        .map(|(i, v)| (i, index.similarity.score(query, v)))
        .collect();
    let cmp = |a: &(usize, S), b: &(usize, S)| {
        rank_order((index.ids[a.0].as_str(), a.1), (index.ids[b.0].as_str(), b.1))
    };
    if k == 0 {
        return Ok(Vec::new());
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    Ok(scored
        .into_iter()
        .map(|(i, score)| ScoredDoc {
            doc_id: index.ids[i].clone(),
            score,
        })
        .collect())
}

impl<S: Scalar> Retriever<S> for VectorIndex<S> {
    type Query = Embedding<S>;

    fn retrieve(&self, query: &Embedding<S>, k: usize, exclude: &HashSet<String>) -> Result<Vec<ScoredDoc<S>>> {
        dense_search(self, query, k, exclude)
    }
}
