//! Sliding-window evaluation: session construction, unseen filtering, top-N
//! metrics, the novel-item view, and two-stage aggregation with context
//! breakdowns.

mod aggregate;
mod metrics;
mod pipeline;
mod session;

use thiserror::Error;

pub use aggregate::{aggregate, aggregate_by, AggregateKey, ContextKey, GroupedSummary, Summary};
pub use metrics::{ndcg_at_n, ndcg_at_n_with_gain, precision_at_n, recall_at_n, Basket, Gain, Metric};
pub use pipeline::{
    evaluate, meal_specific_protocol, Context, EmData, EvalConfig, EvalRun, MetricRecord, Scope, SessionOutcome,
};
pub use session::{
    check_session, filter_unseen, make_sessions, novel_only_view, Eligibility, SessionSplit, DEFAULT_WINDOW,
};

use crate::models::ModelError;
use crate::stats::StatsError;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("cutoff N must be at least 1")]
    ZeroCutoff,
    #[error("session window must be at least 3 days, got {0}")]
    InvalidWindow(u32),
    #[error("log spans {span} days, fewer than the {window}-day session window")]
    SpanTooShort { span: u32, window: u32 },
    #[error("no metric records to aggregate")]
    NoRecords,
    #[error("session {session}: {reason}")]
    InvalidSession { session: usize, reason: String },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(Box<ModelError>),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl From<ModelError> for EvalError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Metric(inner) => inner,
            other => EvalError::Model(Box::new(other)),
        }
    }
}
