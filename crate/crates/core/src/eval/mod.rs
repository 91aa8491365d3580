//! Run files and the metrics computed over them.

mod metrics;
mod run;

pub use metrics::{evaluate, evaluate_run, recall_at_k, reciprocal_rank, MetricsReport, QueryMetrics};
pub use run::{RunEntry, RunFile};
