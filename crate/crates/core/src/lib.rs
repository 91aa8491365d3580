//! Progressive, LLM-assisted query expansion over retrieval sources that
//! charge per unique document, plus the baselines it is measured against.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which is what the CLI uses.

pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod expansion;
pub mod fixture;
pub mod gateway;
pub mod llm;
pub mod pipeline;
pub mod retriever;
pub mod scalar;
pub mod sparse;

pub use corpus::{Corpus, CorpusStats, Document, QrelSet, QueryRecord};
pub use eval::{MetricsReport, RunFile};
pub use pipeline::Method;
pub use error::{Error, Result};
pub use retriever::{Retriever, ScoredDoc};
pub use scalar::Scalar;
pub use sparse::{Tokenizer, TokenizerConfig};

pub type InvertedIndex = sparse::InvertedIndex<f64>;
pub type WeightedQuery = sparse::WeightedQuery<f64>;
pub type Bm25Params = sparse::Bm25Params<f64>;
pub type ProqeParams = expansion::ProqeParams<f64>;
pub type TermWeightTable = expansion::TermWeightTable<f64>;
pub type Rm3Params = expansion::Rm3Params<f64>;
pub type RocchioParams = expansion::RocchioParams<f64>;
pub type Embedding = dense::Embedding<f64>;
pub type DenseParams = dense::DenseParams<f64>;
pub type VectorIndex = dense::VectorIndex<f64>;
pub type RunConfig = pipeline::RunConfig<f64>;
pub type RunOutput = pipeline::RunOutput<f64>;
