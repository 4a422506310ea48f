//! Host-side conditioning and characterisation metrics.

mod condition;
mod filter;
mod io;
mod metrics;

use thiserror::Error;

pub use condition::{compensate_drift, tare, TareConfig, TareOffset};
pub use filter::{design_lowpass, filter_stream, FilterSpec, FilterState, Lowpass, Section};
pub use io::{channel, read_samples_csv, write_samples_csv, ChannelSample, MetricReport, REPORT_VERSION};
pub use metrics::{
    hysteresis_error, relative_change, repeatability, step_metrics, step_metrics_with, StepConfig, StepMetrics,
};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid filter: {0}")]
    InvalidSpec(String),
    #[error("curves share no force span (would be [{lo}, {hi}])")]
    SpanMismatch { lo: f64, hi: f64 },
    #[error("need at least {need} values, got {have}")]
    TooFewValues { have: usize, need: usize },
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("mean {0} is not positive")]
    NonPositiveMean(f64),
    #[error("series has no step")]
    NoStep,
    #[error("series does not settle inside the tail window")]
    NotSettled,
    #[error("baseline channel {channel} moves too much (σ = {std:.3} N); load suspected")]
    LoadSuspected { channel: usize, std: f64 },
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
