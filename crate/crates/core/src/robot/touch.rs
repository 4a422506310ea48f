use serde::{Deserialize, Serialize};

use crate::calibration::ProximityModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TouchClass {
    HumanHand,
    Object,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TouchConfig {
    /// Minimum length of the proximity window, s.
    pub window_s: f64,
    /// Column force that counts as a touch, N.
    pub touch_force: f64,
    /// Half-width of the baseline band in units of the baseline σ.
    pub band_sigmas: f64,
}

impl Default for TouchConfig {
    fn default() -> Self {
        Self {
            window_s: 2.0,
            touch_force: 0.5,
            band_sigmas: 3.0,
        }
    }
}

/// Decides who touched the sensor from the proximity counters preceding the
/// touch. Conductive bodies raise the counter on the way in; a tool or a
/// plastic object leaves it at baseline.
///
/// `column_forces` only gates whether there is a touch at all.
pub fn classify_touch(
    column_forces: &[f64],
    window: &[f64],
    proximity_rate: f64,
    model: &ProximityModel,
    cfg: &TouchConfig,
) -> TouchClass {
    if !column_forces.iter().any(|&f| f >= cfg.touch_force) {
        return TouchClass::Unknown;
    }
    let need = (cfg.window_s * proximity_rate).ceil() as usize;
    if window.len() < need.max(1) {
        return TouchClass::Unknown;
    }
    if window.iter().any(|&c| c > model.detection_threshold) {
        return TouchClass::HumanHand;
    }
    let band = cfg.band_sigmas * model.baseline_sigma;
    if window.iter().all(|&c| (c - model.b).abs() <= band) {
        TouchClass::Object
    } else {
        TouchClass::Unknown
    }
}
