use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc<S> {
    pub doc_id: String,
    pub score: S,
}

/// A ranked retrieval backend: sparse, dense, or remote.
pub trait Retriever<S: Scalar>: Send + Sync {
    type Query: ?Sized;

    /// Top `k` documents for `query`, best first, never returning an id in
    /// `exclude` when [`supports_exclusion`](Self::supports_exclusion) holds.
    fn retrieve(
        &self,
        query: &Self::Query,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<ScoredDoc<S>>>;

    /// Backends that cannot filter server-side return false and get
    /// over-fetched instead.
    fn supports_exclusion(&self) -> bool {
        true
    }
}

/// Descending score, then ascending doc id.
pub(crate) fn rank_order<S: Scalar>(a: (&str, S), b: (&str, S)) -> std::cmp::Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.0.cmp(b.0))
}

impl<S: Scalar, R: Retriever<S> + ?Sized> Retriever<S> for &R {
    type Query = R::Query;

    fn retrieve(
        &self,
        query: &Self::Query,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<ScoredDoc<S>>> {
        (**self).retrieve(query, k, exclude)
    }

    fn supports_exclusion(&self) -> bool {
        (**self).supports_exclusion()
    }
}

impl<S: Scalar, R: Retriever<S> + ?Sized> Retriever<S> for std::sync::Arc<R> {
    type Query = R::Query;

    fn retrieve(
        &self,
        query: &Self::Query,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<ScoredDoc<S>>> {
        (**self).retrieve(query, k, exclude)
    }

    fn supports_exclusion(&self) -> bool {
        (**self).supports_exclusion()
    }
}
