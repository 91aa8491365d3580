//! Dense retrieval: embeddings, encoders, an exact vector index, and the
//! embedding-space form of progressive expansion.
//!
//! The intermediate query embedding is
//! `E(q+) = σ·E(q) + τ·(1/M)·Σ w(t)·E(t)` over the M terms of the weight table,
//! and the final one is `E(q') = σ·E(q+) + δ·E(cot)`.

mod encoder;
mod index;
mod proqe;

pub use encoder::{Encoder, HashedBowEncoder, DEFAULT_DIM};
pub use index::{dense_search, Similarity, VectorIndex};
pub use proqe::{run_proqe_dense, DenseOutcome};

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::TermWeightTable;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding<S> {
    values: Vec<S>,
}

impl<S: Scalar> Embedding<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "embedding component {pos} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![S::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn dot(&self, other: &Self) -> S {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| *a * *b)
            .sum()
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn cosine(&self, other: &Self) -> S {
        let denom = self.norm() * other.norm();
        if denom > S::zero() {
            self.dot(other) / denom
        } else {
            S::zero()
        }
    }

    pub fn scaled(&self, c: S) -> Self {
        Self {
            values: self.values.iter().map(|v| *v * c).collect(),
        }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            })
        }
    }

    /// `self += c·other`.
    pub fn add_scaled(&mut self, c: S, other: &Self) -> Result<()> {
        self.check_dim(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + c * *b;
        }
        Ok(())
    }
}

impl<S> Index<usize> for Embedding<S> {
    type Output = S;

    fn index(&self, i: usize) -> &S {
        &self.values[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseParams<S> {
    /// Query weight σ.
    pub sigma: S,
    /// Term weight τ.
    pub tau: S,
    /// Chain-of-thought weight δ.
    pub delta: S,
    /// Sum only positively weighted terms (and count only those in M).
    pub positive_only: bool,
}

impl<S: Scalar> Default for DenseParams<S> {
    fn default() -> Self {
        Self {
            sigma: S::of(0.8),
            tau: S::of(0.2),
            delta: S::of(0.2),
            positive_only: false,
        }
    }
}

/// `σ·E(q) + τ·(1/M)·Σ w_i·E_i` for explicit `(w_i, E_i)` pairs, with
/// `M = terms.len()`. `M = 0` gives `σ·E(q)`.
pub fn combine_weighted<S: Scalar>(
    query: &Embedding<S>,
    terms: &[(S, &Embedding<S>)],
    params: &DenseParams<S>,
) -> Result<Embedding<S>> {
    let mut out = query.scaled(params.sigma);
    if terms.is_empty() {
        return Ok(out);
    }
    let per_term = params.tau / S::of_usize(terms.len());
    for (w, e) in terms {
        out.add_scaled(per_term * *w, e)?;
    }
    Ok(out)
}

/// Intermediate query embedding from the weight table. Every table term
/// contributes with its signed weight unless `positive_only` is set.
pub fn combine_intermediate<S, E>(
    query: &Embedding<S>,
    table: &TermWeightTable<S>,
    encoder: &E,
    params: &DenseParams<S>,
) -> Result<Embedding<S>>
where
    S: Scalar,
    E: Encoder<S> + ?Sized,
{
    let encoded: Vec<(S, Embedding<S>)> = table
        .iter()
        .filter(|(_, w)| !params.positive_only || *w > S::zero())
        .map(|(t, w)| (w, encoder.encode(t)))
        .collect();
    let refs: Vec<(S, &Embedding<S>)> = encoded.iter().map(|(w, e)| (*w, e)).collect();
    combine_weighted(query, &refs, params)
}

/// `σ·E(q+) + δ·E(cot)`.
pub fn combine_final<S: Scalar>(
    intermediate: &Embedding<S>,
    cot: &Embedding<S>,
    params: &DenseParams<S>,
) -> Result<Embedding<S>> {
    let mut out = intermediate.scaled(params.sigma);
    out.add_scaled(params.delta, cot)?;
    Ok(out)
}
