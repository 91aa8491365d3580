//! Seeded synthetic collections with built-in vocabulary mismatch.
//!
//! Each topic has a two-word query. Its relevant documents contain only one
//! of the query words and otherwise speak the topic's own vocabulary, while a
//! handful of distractor documents contain both query words and rank above
//! every relevant one under plain BM25. Feedback from the first-pass top
//! documents is therefore dominated by distractors, and only a method that
//! learns the relevant vocabulary recovers.

use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_queries, Corpus, QrelSet, QueryRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub seed: u64,
    pub topics: usize,
    /// Total documents; topic documents first, background fills the rest.
    pub docs: usize,
    pub relevant_per_topic: (usize, usize),
    pub distractors_per_topic: (usize, usize),
    pub filler_vocab: usize,
    /// Grade written for relevant documents (distractors get 0).
    pub relevant_grade: u32,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            topics: 25,
            docs: 200,
            relevant_per_topic: (1, 3),
            distractors_per_topic: (2, 5),
            filler_vocab: 120,
            relevant_grade: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub corpus: Corpus,
    pub queries: Vec<QueryRecord>,
    pub qrels: QrelSet,
}

const ONSETS: [&str; 15] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Deterministic pronounceable pseudo-word number `i` (three syllables, no
/// collisions below 75³).
fn word(i: usize) -> String {
    let syllable = |j: usize| format!("{}{}", ONSETS[j % 15], VOWELS[(j / 15) % 5]);
    format!("{}{}{}", syllable(i % 75), syllable((i / 75) % 75), syllable(i / 5625))
}

struct Vocab {
    next: usize,
}

impl Vocab {
    fn take(&mut self, n: usize) -> Vec<String> {
        let out = (self.next..self.next + n).map(word).collect();
        self.next += n;
        out
    }
}

impl SyntheticFixture {
    pub fn generate(config: &FixtureConfig) -> Result<Self> {
        let (rel_lo, rel_hi) = config.relevant_per_topic;
        let (dis_lo, dis_hi) = config.distractors_per_topic;
        if config.topics == 0 || rel_lo == 0 || rel_lo > rel_hi || dis_lo > dis_hi || config.filler_vocab == 0 {
            return Err(Error::InvalidArgument("degenerate fixture configuration".into()));
        }
        if config.topics * (rel_hi + dis_hi) > config.docs {
            return Err(Error::InvalidArgument(format!(
                "{} documents cannot hold {} topics",
                config.docs, config.topics
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut vocab = Vocab { next: 0 };
        let filler = vocab.take(config.filler_vocab);

        let mut docs: Vec<(String, String)> = Vec::new();
        let mut queries = Vec::new();
        let mut qrels = QrelSet::new(config.relevant_grade.max(1));
        let filler_words = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
            (0..n).map(|_| filler.choose(rng).expect("filler is non-empty").clone()).collect()
        };

        for t in 0..config.topics {
            let qwords = vocab.take(2);
            let topical = vocab.take(8);
            let offtopic = vocab.take(6);
            let qid = format!("q{:03}", t + 1);
            queries.push(QueryRecord::new(&qid, format!("{} {}", qwords[0], qwords[1])));

            for r in 0..rng.random_range(rel_lo..=rel_hi) {
                let mut words = vec![qwords[0].clone()];
                for _ in 0..rng.random_range(5..=7) {
                    words.push(topical.choose(&mut rng).expect("non-empty").clone());
                }
                words.extend(filler_words(&mut rng, 8));
                words.shuffle(&mut rng);
                let did = format!("t{:03}r{r}", t + 1);
                qrels.insert(&qid, &did, config.relevant_grade);
                docs.push((did, words.join(" ")));
            }
            for d in 0..rng.random_range(dis_lo..=dis_hi) {
                let mut words = vec![qwords[0].clone(), qwords[1].clone()];
                if rng.random_bool(0.5) {
                    words.push(qwords[0].clone());
                }
                for _ in 0..rng.random_range(3..=4) {
                    words.push(offtopic.choose(&mut rng).expect("non-empty").clone());
                }
                words.extend(filler_words(&mut rng, 8));
                words.shuffle(&mut rng);
                let did = format!("t{:03}x{d}", t + 1);
                qrels.insert(&qid, &did, 0);
                docs.push((did, words.join(" ")));
            }
        }
        let mut b = 0;
        while docs.len() < config.docs {
            let n = rng.random_range(10..=14);
            docs.push((format!("bg{b:04}"), filler_words(&mut rng, n).join(" ")));
            b += 1;
        }

        Ok(Self {
            corpus: Corpus::from_pairs(docs)?,
            queries,
            qrels,
        })
    }

    /// Writes `corpus.jsonl`, `queries.tsv` and `qrels.txt` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| {
            let path = dir.join(name);
            let mut buf = Vec::new();
            f(&mut buf).map_err(|e| Error::io(&path, e))?;
            fs::write(&path, buf).map_err(|e| Error::io(&path, e))
        };
        write("corpus.jsonl", &|b| self.corpus.write_jsonl(b))?;
        write("queries.tsv", &|b| write_queries(&self.queries, b))?;
        write("qrels.txt", &|b| self.qrels.write_trec(b))
    }
}
