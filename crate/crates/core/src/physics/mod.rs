//! Forward model of the two sensing channels.
//!
//! The piezoresistive channel maps per-prexel force to resistance, including
//! stress relaxation, loading/unloading hysteresis and noise. The
//! self-capacitive channel maps hand distance to the charge-transfer counter.

mod capacitive;
mod drift;
mod layout;
mod piezo;
mod step;
mod truth;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use capacitive::{
    capacitance_estimate, counter_of, counter_of_truth, half_charge_time, rc_charge_voltage,
    simulate_charge_count, CapacitiveParams, CounterReading,
};
pub use drift::{drift_resistance, DriftModel};
pub use layout::{SensorLayout, MAX_MUX_LINES};
pub use piezo::{
    resistance_of, LoadContext, LoadDirection, LoadTracker, PiezoParams, PiezoReading,
    CONDUCTANCE_FLOOR,
};
pub use step::StepResponse;
pub use truth::{GroundTruthState, ObjectKind};

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("unknown sensor preset `{0}` (expected 16px or 64px)")]
    UnknownPreset(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("force {0} N is not a valid load")]
    InvalidForce(f64),
    #[error("force {force} N exceeds the characterised range of {max} N")]
    ForceOutOfRange { force: f64, max: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Complete parameter set of one simulated sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub layout: SensorLayout,
    pub piezo: PiezoParams,
    pub drift: DriftModel,
    pub capacitive: CapacitiveParams,
    pub step: StepResponse,
}

impl SensorModel {
    pub fn preset(name: &str) -> Result<Self, PhysicsError> {
        Ok(Self {
            layout: SensorLayout::preset(name)?,
            piezo: PiezoParams::default(),
            drift: DriftModel::default(),
            capacitive: CapacitiveParams::preset(name)?,
            step: StepResponse::default(),
        })
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        self.layout.validate()?;
        self.piezo.validate()?;
        self.drift.validate()?;
        self.capacitive.validate()
    }

    /// Parses a TOML document.
    ///
    /// ```toml
    /// preset = "64px"          # starting point, default "64px"
    ///
    /// [piezo]                  # any subset of PiezoParams fields
    /// hysteresis_fraction = 0.12
    ///
    /// [capacitive]
    /// base_sigma = 5.0
    /// ```
    ///
    /// Tables `layout`, `piezo`, `drift`, `capacitive` and `step` override the
    /// preset key by key.
    pub fn from_toml_str(text: &str) -> Result<Self, PhysicsError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| PhysicsError::Config(e.to_string()))?;
        let preset = match user.get("preset") {
            Some(toml::Value::String(s)) => s.as_str(),
            Some(_) => return Err(PhysicsError::Config("`preset` must be a string".into())),
            None => "64px",
        };
        let base = Self::preset(preset)?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| PhysicsError::Config(e.to_string()))?;
        for (section, value) in user {
            if section == "preset" {
                continue;
            }
            let (Some(toml::Value::Table(dst)), toml::Value::Table(src)) = (merged.get_mut(&section), value) else {
                return Err(PhysicsError::Config(format!("unknown section `{section}`")));
            };
            for (k, v) in src {
                if !dst.contains_key(&k) {
                    return Err(PhysicsError::Config(format!("unknown key `{section}.{k}`")));
                }
                dst.insert(k, v);
            }
        }
        let model: Self = merged.try_into().map_err(|e: toml::de::Error| PhysicsError::Config(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PhysicsError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}
