use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::drift::DriftModel;
use super::PhysicsError;
use crate::poly::Polynomial;

/// Conductance never drops below this floor (1 GΩ).
pub const CONDUCTANCE_FLOOR: f64 = 1.0e-9;

/// Piezoresistive channel parameters of one prexel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiezoParams {
    /// Upper end of the characterised force range, N.
    pub force_range: f64,
    /// Below this load the contact is delaminated and readings are unreliable, N.
    pub min_reliable_force: f64,
    /// Resistance with nothing pressing on the prexel, Ω.
    pub base_resistance: f64,
    /// Force (N) to conductance (S), valid on `[min_reliable_force, force_range]`.
    pub conductance_poly: Polynomial,
    /// Per-sample relative Gaussian noise on conductance.
    pub noise_sigma_rel: f64,
    /// Relative spread of the gain of each separate load application.
    pub repeat_sigma_rel: f64,
    /// Width of the loading/unloading band as a fraction of full-scale span.
    pub hysteresis_fraction: f64,
    /// Noise inflation below `min_reliable_force`.
    pub unreliable_noise_factor: f64,
    /// A force change larger than this fraction of full scale restarts relaxation.
    pub drift_reset_fraction: f64,
}

impl Default for PiezoParams {
    fn default() -> Self {
        Self {
            force_range: 15.0,
            min_reliable_force: 0.5,
            base_resistance: 1.0e6,
            // 1.38e-4 S/N slope at mid-range (7.75 N).
            conductance_poly: Polynomial::new(vec![1.0e-4, 1.51e-4, -2.0e-6, 1.0e-7]),
            noise_sigma_rel: 0.002,
            // Expected range of six draws is 2.534 σ, so this gives 11.3 %.
            repeat_sigma_rel: 0.0446,
            hysteresis_fraction: 0.15,
            unreliable_noise_factor: 5.0,
            drift_reset_fraction: 0.10,
        }
    }
}

impl PiezoParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let bad = |msg: String| Err(PhysicsError::InvalidParameter(msg));
        if !(self.force_range > self.min_reliable_force && self.min_reliable_force > 0.0) {
            return bad(format!(
                "force range [{}, {}] is empty",
                self.min_reliable_force, self.force_range
            ));
        }
        if !(self.base_resistance > 0.0 && self.base_resistance.is_finite()) {
            return bad(format!("base resistance {} must be finite and positive", self.base_resistance));
        }
        if !(0.0..=0.5).contains(&self.hysteresis_fraction) {
            return bad(format!("hysteresis fraction {} outside [0, 0.5]", self.hysteresis_fraction));
        }
        if self.noise_sigma_rel < 0.0 || self.repeat_sigma_rel < 0.0 {
            return bad("noise levels must be non-negative".into());
        }
        if self.conductance_poly.eval(self.min_reliable_force) <= 0.0
            || self
                .conductance_poly
                .min_slope(self.min_reliable_force, self.force_range, 512)
                < 0.0
        {
            return bad("conductance polynomial must be positive and non-decreasing on the valid range".into());
        }
        Ok(())
    }

    /// Conductance difference between full-scale and minimum reliable force.
    pub fn full_scale_span(&self) -> f64 {
        self.conductance_poly.eval(self.force_range) - self.conductance_poly.eval(self.min_reliable_force)
    }

    /// Noise-free conductance on the midline between the hysteresis branches.
    ///
    /// Below the reliable force the curve is a straight line from the
    /// unloaded conductance to the polynomial value at the reliable limit.
    pub fn mean_conductance(&self, force: f64) -> f64 {
        let fmin = self.min_reliable_force;
        if force >= fmin {
            self.conductance_poly.eval(force)
        } else {
            let g0 = 1.0 / self.base_resistance;
            g0 + (self.conductance_poly.eval(fmin) - g0) * force / fmin
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadDirection {
    Loading,
    Unloading,
}

/// State of the load application a reading belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadContext {
    /// Time since the current load was applied, s.
    pub t_since_load: f64,
    pub direction: LoadDirection,
    /// Multiplicative gain of this load application (1 when noise is off).
    pub gain: f64,
}

impl LoadContext {
    pub fn fresh(direction: LoadDirection) -> Self {
        Self {
            t_since_load: 0.0,
            direction,
            gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiezoReading {
    pub resistance: f64,
    /// Force below the reliable threshold; value carries inflated noise.
    pub unreliable: bool,
}

/// Resistance of one prexel under `force` newtons.
///
/// Conductance follows the calibration polynomial, offset by half the
/// hysteresis band (down while loading, up while unloading), divided by the
/// normalised relaxation curve, and scaled by the load gain and sample noise.
pub fn resistance_of(
    force: f64,
    load: &LoadContext,
    piezo: &PiezoParams,
    drift: &DriftModel,
    noise: Option<&mut dyn RngCore>,
) -> Result<PiezoReading, PhysicsError> {
    if !(force >= 0.0) || !(load.t_since_load >= 0.0) {
        return Err(PhysicsError::InvalidForce(force));
    }
    if force > piezo.force_range {
        return Err(PhysicsError::ForceOutOfRange {
            force,
            max: piezo.force_range,
        });
    }
    let unreliable = force < piezo.min_reliable_force;
    if force == 0.0 && noise.is_none() {
        return Ok(PiezoReading {
            resistance: piezo.base_resistance,
            unreliable,
        });
    }

    let mut g = piezo.mean_conductance(force);
    if force > 0.0 {
        let taper = (force / piezo.min_reliable_force).min(1.0);
        let half_band = 0.5 * piezo.hysteresis_fraction * piezo.full_scale_span() * taper;
        g += match load.direction {
            LoadDirection::Loading => -half_band,
            LoadDirection::Unloading => half_band,
        };
        g /= drift.normalized(load.t_since_load);
        g *= load.gain;
    }
    if let Some(rng) = noise {
        let mut sigma = piezo.noise_sigma_rel;
        if unreliable {
            sigma *= piezo.unreliable_noise_factor;
        }
        if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            g *= 1.0 + n.sample(rng);
        }
    }
    Ok(PiezoReading {
        resistance: 1.0 / g.max(CONDUCTANCE_FLOOR),
        unreliable,
    })
}

/// Tracks the load history of one prexel: onset time for relaxation,
/// loading direction for hysteresis and the gain of the current contact.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadTracker {
    loaded: bool,
    onset: f64,
    reference_force: f64,
    last_force: f64,
    direction: LoadDirection,
    gain: f64,
}

impl Default for LoadTracker {
    fn default() -> Self {
        Self {
            loaded: false,
            onset: 0.0,
            reference_force: 0.0,
            last_force: 0.0,
            direction: LoadDirection::Loading,
            gain: 1.0,
        }
    }
}

impl LoadTracker {
    /// Registers the force at time `t` and returns the context to evaluate it in.
    ///
    /// A new contact draws a fresh gain when `rng` is given.
    pub fn observe(
        &mut self,
        force: f64,
        t: f64,
        piezo: &PiezoParams,
        rng: Option<&mut dyn RngCore>,
    ) -> LoadContext {
        if force > 0.0 && !self.loaded {
            self.loaded = true;
            self.onset = t;
            self.reference_force = force;
            self.direction = LoadDirection::Loading;
            self.gain = match rng {
                Some(rng) if piezo.repeat_sigma_rel > 0.0 => {
                    let n = Normal::new(1.0, piezo.repeat_sigma_rel).expect("finite sigma");
                    n.sample(rng).clamp(0.5, 1.5)
                }
                _ => 1.0,
            };
        } else if force <= 0.0 {
            self.loaded = false;
            self.gain = 1.0;
        } else {
            if (force - self.reference_force).abs() > piezo.drift_reset_fraction * piezo.force_range {
                self.onset = t;
                self.reference_force = force;
            }
            if force > self.last_force {
                self.direction = LoadDirection::Loading;
            } else if force < self.last_force {
                self.direction = LoadDirection::Unloading;
            }
        }
        self.last_force = force;
        LoadContext {
            t_since_load: if self.loaded { (t - self.onset).max(0.0) } else { 0.0 },
            direction: self.direction,
            gain: self.gain,
        }
    }

    pub fn onset(&self) -> Option<f64> {
        self.loaded.then_some(self.onset)
    }
}
