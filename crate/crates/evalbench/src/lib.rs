//! Evaluation harness and latency bench for the ultrasound pipeline.
//!
//! [`eval_segmentation`] and [`eval_measurements`] score a provider on a
//! replay dataset; [`bench_latency`] runs a loopback server with an
//! instrumented client and reports per-stage timing.

pub mod bench;
pub mod dataset;
pub mod eval;
pub mod stats;

use thiserror::Error;
use usar_core::metrics::MetricsError;
use usar_providers::SourceError;

pub use bench::{bench_latency, BenchConfig, LagStats, LatencyReport};
pub use dataset::{Dataset, PhantomDataset, PhantomSample};
pub use eval::{
    eval_measurements, eval_segmentation, ErrorRow, ErrorTable, MeasurementEval, SampleFailure,
    SegmentationEval,
};
pub use stats::StageStats;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset has no entries")]
    EmptyDataset,
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("provider failed on all {0} samples")]
    NothingEvaluated(usize),
}
