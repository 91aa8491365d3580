//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's scoring or combination code.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use proqe::Corpus;
use rand::{Rng, RngExt};

/// Lowercase pseudo-words that are never stopwords.
pub fn vocab(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i:02}x")).collect()
}

/// A random corpus of `n_docs` documents with 1..=`max_len` tokens each,
/// returned both as a library corpus and as token lists for the oracles.
pub fn random_corpus(rng: &mut impl Rng, n_docs: usize, max_len: usize, vocab: &[String]) -> (Corpus, Vec<(String, Vec<String>)>) {
    let mut docs = Vec::new();
    for i in 0..n_docs {
        let len = rng.random_range(1..=max_len);
        let toks: Vec<String> = (0..len)
            .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
            .collect();
        docs.push((format!("d{i:03}"), toks));
    }
    let corpus = Corpus::from_pairs(docs.iter().map(|(id, t)| (id.clone(), t.join(" ")))).unwrap();
    (corpus, docs)
}

/// Exhaustive BM25 with Lucene idf over pre-tokenized documents. Only
/// documents containing a query term are returned, best first, ties by id.
pub fn bm25_oracle(docs: &[(String, Vec<String>)], query: &[(String, f64)], k1: f64, b: f64) -> Vec<(String, f64)> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
    let mut df: HashMap<&str, f64> = HashMap::new();
    for (_, toks) in docs {
        let mut uniq: Vec<&str> = toks.iter().map(String::as_str).collect();
        uniq.sort();
        uniq.dedup();
        for t in uniq {
            *df.entry(t).or_default() += 1.0;
        }
    }
    let mut out = Vec::new();
    for (id, toks) in docs {
        let dl = toks.len() as f64;
        let mut score = 0.0;
        let mut matched = false;
        for (term, w) in query {
            let tf = toks.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let d = df[term.as_str()];
            let idf = (1.0 + (n - d + 0.5) / (d + 0.5)).ln();
            score += w * idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if matched {
            out.push((id.clone(), score));
        }
    }
    sort_ranked(&mut out);
    out
}

/// Descending score, then ascending id.
pub fn sort_ranked(list: &mut [(String, f64)]) {
    list.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = dot(a, a).sqrt() * dot(b, b).sqrt();
    if d > 0.0 {
        dot(a, b) / d
    } else {
        0.0
    }
}

/// `sigma*q + tau/M * sum(w_i * e_i)` evaluated slot by slot.
pub fn intermediate_oracle(q: &[f64], terms: &[(f64, Vec<f64>)], sigma: f64, tau: f64) -> Vec<f64> {
    (0..q.len())
        .map(|i| {
            let mut v = sigma * q[i];
            if !terms.is_empty() {
                let m = terms.len() as f64;
                for (w, e) in terms {
                    v += tau / m * w * e[i];
                }
            }
            v
        })
        .collect()
}

/// Weight of each term after a sequence of (terms, relevant) updates,
/// by counting: beta per relevant mention minus gamma per irrelevant one.
pub fn weight_by_counting(updates: &[(Vec<String>, bool)], beta: f64, gamma: f64) -> BTreeMap<String, f64> {
    let mut rel: BTreeMap<String, u32> = BTreeMap::new();
    let mut irr: BTreeMap<String, u32> = BTreeMap::new();
    for (terms, relevant) in updates {
        for t in terms {
            rel.entry(t.clone()).or_default();
            irr.entry(t.clone()).or_default();
            if *relevant {
                *rel.get_mut(t).unwrap() += 1;
            } else {
                *irr.get_mut(t).unwrap() += 1;
            }
        }
    }
    rel.into_iter()
        .map(|(t, r)| {
            let i = irr[&t];
            (t, beta * f64::from(r) - gamma * f64::from(i))
        })
        .collect()
}

use std::sync::Mutex;

use proqe::llm::{CotText, LanguageModel, RelVerdict, TermList};
use proqe::{Document, Error, QueryRecord};

/// Scripted model: fixed verdict, fixed keywords, fixed generation. Records
/// the order of calls and can fail the n-th relevance judgment.
pub struct StubLlm {
    pub relevant: bool,
    pub terms: Vec<String>,
    pub cot: String,
    pub fail_judge_at: Option<usize>,
    pub calls: Mutex<Vec<String>>,
}

impl StubLlm {
    pub fn new(relevant: bool, terms: &[&str], cot: &str) -> Self {
        Self {
            relevant,
            terms: terms.iter().map(|t| t.to_string()).collect(),
            cot: cot.to_string(),
            fail_judge_at: None,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    fn log(&self, what: &str) -> usize {
        let mut calls = self.calls.lock().unwrap();
        calls.push(what.to_string());
        calls.iter().filter(|c| *c == what).count()
    }
}

impl LanguageModel for StubLlm {
    fn judge_relevance(&self, _: &QueryRecord, _: &Document) -> proqe::Result<RelVerdict> {
        let nth = self.log("judge");
        if self.fail_judge_at == Some(nth) {
            return Err(Error::LlmTransport {
                attempts: 3,
                message: "stub outage".into(),
            });
        }
        Ok(RelVerdict::from_response(if self.relevant { "Yes." } else { "No." }))
    }

    fn extract_terms(&self, _: &QueryRecord, _: &Document, m: usize) -> proqe::Result<TermList> {
        self.log("extract");
        Ok(TermList::new(self.terms.iter().map(String::as_str), m))
    }

    fn generate_cot(&self, _: &QueryRecord) -> proqe::Result<CotText> {
        self.log("cot");
        Ok(CotText::new(&self.cot))
    }

    fn generate_passage(&self, _: &QueryRecord) -> proqe::Result<CotText> {
        self.log("passage");
        Ok(CotText::new(&self.cot))
    }
}

/// Five-query metric fixture with graded judgments.
///
/// | query | judged (grade)       | run order                         |
/// |-------|----------------------|-----------------------------------|
/// | q1    | d1 (3), d2 (1)       | d2, d9, d1                        |
/// | q2    | d3 (3), d4 (3)       | d4, d3                            |
/// | q3    | d5 (2)               | d5                                |
/// | q4    | d6 (3)               | f01..f20, d6 (d6 at rank 21)      |
/// | q5    | d7 (3)               | absent from the run               |
pub const METRIC_QRELS: &str = "q1 0 d1 3\nq1 0 d2 1\nq2 0 d3 3\nq2 0 d4 3\nq3 0 d5 2\nq4 0 d6 3\nq5 0 d7 3\n";

pub fn metric_run() -> String {
    let mut lines = vec![
        "q1 Q0 d2 1 3.0 hand".to_string(),
        "q1 Q0 d9 2 2.0 hand".to_string(),
        "q1 Q0 d1 3 1.0 hand".to_string(),
        "q2 Q0 d4 1 2.0 hand".to_string(),
        "q2 Q0 d3 2 1.0 hand".to_string(),
        "q3 Q0 d5 1 1.0 hand".to_string(),
    ];
    for i in 1..=20 {
        lines.push(format!("q4 Q0 f{i:02} {i} {} hand", 100 - i));
    }
    lines.push("q4 Q0 d6 21 1.0 hand".to_string());
    lines.join("\n") + "\n"
}

/// Hand-computed values for the fixture above, MRR cutoff 20.
///
/// Threshold 3: RR = 1/3, 1, 0 (d5 is grade 2), 0 (rank 21), 0 (missing);
/// MRR = (1/3 + 1) / 5. Recall@1 over the four queries with a relevant
/// document: 0, 1/2, 0, 0, mean 1/8.
///
/// Threshold 1: RR = 1 (d2 now relevant), 1, 1, 0, 0; MRR = 3/5.
/// Recall@1 over all five: 1/2, 1/2, 1, 0, 0, mean 2/5.
pub struct MetricOracle {
    pub mrr_t3: f64,
    pub r1_t3: f64,
    pub mrr_t1: f64,
    pub r1_t1: f64,
    pub mrr_t3_k25: f64,
}

pub const METRIC_ORACLE: MetricOracle = MetricOracle {
    mrr_t3: (1.0 / 3.0 + 1.0) / 5.0,
    r1_t3: 0.5 / 4.0,
    mrr_t1: 3.0 / 5.0,
    r1_t1: 2.0 / 5.0,
    mrr_t3_k25: (1.0 / 3.0 + 1.0 + 1.0 / 21.0) / 5.0,
};
