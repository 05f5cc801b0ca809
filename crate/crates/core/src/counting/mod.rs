//! Photon event streams, coincidence windowing and the rate estimators
//! built on them.

mod coincidence;
mod config;
mod estimators;
mod stream;

pub use coincidence::{count_coincidences, CoincidenceCount};
pub use config::{derived_rng, CountingConfig, Matching, StreamPurpose};
pub use estimators::{
    accidental_rate, fractional_quantum_power, group_fqp, mean_and_stderr, output_ratio, snr,
    write_stats_csv, CoincidenceStats, FqpResult, RepetitionSample, Snr, SnrPair, StatsRow,
};
pub use stream::{
    add_background, poisson_times, read_stream_csv, route_stream, simulate_pair_stream,
    thin_stream, thin_with, write_stream_csv, EventStream,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CountingError {
    #[error("event stream {label:?} is not sorted at index {index}")]
    Unsorted { label: String, index: usize },
    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("no mode has a positive net coincidence rate")]
    NoSignal,
    #[error("stream csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("stream csv line {line}: {message}")]
    Format { line: usize, message: String },
}
