//! Fitting of the transfer functions and their online inverses.

mod drift_fit;
mod force;
mod io;
mod proximity;

use thiserror::Error;

pub use drift_fit::{fit_drift, DriftFit, DriftFitConfig};
pub use force::{
    fit_force_conductance, force_of_conductance, ForceConductanceModel, ForceEstimate, ForceRuns, INVERSION_TOLERANCE,
    MAX_CONDITION,
};
pub use io::{read_drift_log, read_force_log, read_proximity_log, ModelFile, MODEL_FILE_VERSION};
pub use proximity::{distance_of_counter, fit_proximity, Proximity, ProximityModel, MIN_DISTANCE};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("fitted curve is not increasing near {force:.3} N")]
    NotMonotone { force: f64 },
    #[error("series trend reverses after block {block}")]
    NonMonotoneTrend { block: usize },
    #[error("no start converged (best rms {best_rms:.4e})")]
    NoConvergence { best_rms: f64 },
    #[error("non-physical fit: {0}")]
    NonPhysical(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
