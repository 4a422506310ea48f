use std::f64::consts::LN_2;

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::truth::{GroundTruthState, ObjectKind};
use super::PhysicsError;

/// Self-capacitive channel parameters.
///
/// The counter follows `a / x + b` for a hand at `x` mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitiveParams {
    /// Counter with no conductive body nearby (`b`), counts.
    pub base_counter: f64,
    /// Distance gain (`a`), counts·mm.
    pub cal_a: f64,
    /// Standard deviation of the counter, counts.
    pub base_sigma: f64,
    /// Charge cycles accumulated per reading.
    pub n_cycles: u32,
    /// Counter increment frequency, Hz.
    pub increment_freq: f64,
    /// Resistor between send and receive pins, Ω.
    pub series_resistance: f64,
    /// Furthest distance at which a hand is reported, mm.
    pub detection_range: f64,
    /// Counting loop bails out here.
    pub saturation_ceiling: f64,
}

impl CapacitiveParams {
    pub fn patch_64() -> Self {
        Self {
            base_counter: 1610.0,
            cal_a: 3220.0,
            base_sigma: 9.6,
            n_cycles: 70,
            increment_freq: 270_000.0,
            series_resistance: 1.0e6,
            detection_range: 100.0,
            saturation_ceiling: 65_535.0,
        }
    }

    pub fn strip_16() -> Self {
        Self {
            base_counter: 1486.0,
            cal_a: 2.0 * 1486.0,
            base_sigma: 29.0,
            detection_range: 50.0,
            ..Self::patch_64()
        }
    }

    pub fn preset(name: &str) -> Result<Self, PhysicsError> {
        match name {
            "16px" => Ok(Self::strip_16()),
            "64px" => Ok(Self::patch_64()),
            other => Err(PhysicsError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.cal_a > 0.0 && self.base_counter > 0.0) {
            return Err(PhysicsError::InvalidParameter(
                "capacitive calibration requires a > 0 and b > 0".into(),
            ));
        }
        if self.n_cycles == 0 || !(self.increment_freq > 0.0) || !(self.series_resistance > 0.0) {
            return Err(PhysicsError::InvalidParameter(
                "charge counting requires n > 0, f > 0 and R > 0".into(),
            ));
        }
        if !(self.saturation_ceiling > self.base_counter) || self.base_sigma < 0.0 {
            return Err(PhysicsError::InvalidParameter(
                "saturation ceiling must exceed the base counter".into(),
            ));
        }
        Ok(())
    }

    /// Capacitance represented by one count, F.
    pub fn counter_quantum(&self) -> f64 {
        1.0 / (self.n_cycles as f64 * self.increment_freq * self.series_resistance * LN_2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterReading {
    pub counts: f64,
    pub saturated: bool,
}

/// Counter reading with a human hand at `distance` mm, or nothing nearby.
pub fn counter_of(
    distance: Option<f64>,
    cap: &CapacitiveParams,
    noise: Option<&mut dyn RngCore>,
) -> CounterReading {
    let mut counts = match distance {
        Some(x) if x > 0.0 => cap.cal_a / x + cap.base_counter,
        _ => cap.base_counter,
    };
    if let Some(rng) = noise {
        if cap.base_sigma > 0.0 {
            counts += Normal::new(0.0, cap.base_sigma).expect("finite sigma").sample(rng);
        }
    }
    clamp_counter(counts, cap)
}

/// Counter reading for a full ground-truth state: non-detectable objects read
/// as baseline, and any interference offset is added before clamping.
pub fn counter_of_truth(
    truth: &GroundTruthState,
    cap: &CapacitiveParams,
    noise: Option<&mut dyn RngCore>,
) -> CounterReading {
    let distance = match truth.object {
        ObjectKind::HumanHand => truth.hand_distance,
        ObjectKind::None | ObjectKind::NonDetectable => None,
    };
    let raw = counter_of(distance, cap, noise);
    if truth.interference == 0.0 {
        raw
    } else {
        clamp_counter(raw.counts + truth.interference, cap)
    }
}

fn clamp_counter(counts: f64, cap: &CapacitiveParams) -> CounterReading {
    if counts >= cap.saturation_ceiling {
        CounterReading {
            counts: cap.saturation_ceiling,
            saturated: true,
        }
    } else {
        CounterReading {
            counts: counts.max(0.0),
            saturated: false,
        }
    }
}

/// Capacitance implied by a counter value, F.
///
/// `C = counter / (n · f · R · ln 2)`
pub fn capacitance_estimate(counter: f64, cap: &CapacitiveParams) -> f64 {
    counter * cap.counter_quantum()
}

/// Voltage across a capacitor charging through `r` towards `v_inf`.
pub fn rc_charge_voltage(t: f64, v_inf: f64, r: f64, c: f64) -> f64 {
    v_inf * (1.0 - (-t / (r * c)).exp())
}

/// Time for the electrode to reach half the supply voltage.
pub fn half_charge_time(r: f64, c: f64) -> f64 {
    r * c * LN_2
}

/// Counts accumulated over `n` back-to-back charge cycles of capacitance `c`
/// when the counter ticks continuously at the increment frequency.
///
/// Each crossing of `vcc / 2` is located by bisection on the charging curve.
pub fn simulate_charge_count(c: f64, cap: &CapacitiveParams, vcc: f64) -> u64 {
    let r = cap.series_resistance;
    let threshold = 0.5 * vcc;
    let mut elapsed = 0.0;
    for _ in 0..cap.n_cycles {
        let (mut lo, mut hi) = (0.0, r * c);
        while rc_charge_voltage(hi, vcc, r, c) < threshold {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rc_charge_voltage(mid, vcc, r, c) < threshold {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        elapsed += 0.5 * (lo + hi);
    }
    (elapsed * cap.increment_freq).round() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn baselines_match_presets() {
        assert_eq!(counter_of(None, &CapacitiveParams::patch_64(), None).counts, 1610.0);
        assert_eq!(counter_of(None, &CapacitiveParams::strip_16(), None).counts, 1486.0);
    }

    #[test]
    fn hand_at_100_mm() {
        let c = counter_of(Some(100.0), &CapacitiveParams::patch_64(), None);
        assert!((c.counts - 1642.2).abs() < 1e-9);
    }

    #[test]
    fn counter_decreases_with_distance() {
        let cap = CapacitiveParams::patch_64();
        let mut prev = f64::INFINITY;
        for x in 1..=300 {
            let c = counter_of(Some(x as f64), &cap, None).counts;
            assert!(c < prev);
            prev = c;
        }
    }

    #[test]
    fn saturation_is_flagged() {
        let cap = CapacitiveParams::patch_64();
        let c = counter_of(Some(0.01), &cap, None);
        assert!(c.saturated);
        assert_eq!(c.counts, cap.saturation_ceiling);
    }

    #[test]
    fn non_detectable_object_reads_baseline() {
        let cap = CapacitiveParams::patch_64();
        let mut truth = GroundTruthState::empty(8, 8);
        truth.hand_distance = Some(5.0);
        truth.object = ObjectKind::NonDetectable;
        assert_eq!(counter_of_truth(&truth, &cap, None).counts, cap.base_counter);
    }

    #[test]
    fn noise_has_configured_spread() {
        let cap = CapacitiveParams::patch_64();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..20_000).map(|_| counter_of(None, &cap, Some(&mut rng)).counts).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!((mean - 1610.0).abs() < 0.3);
        assert!((sd - 9.6).abs() < 0.2);
    }

    #[test]
    fn capacitance_of_baseline() {
        let cap = CapacitiveParams::patch_64();
        assert_eq!(capacitance_estimate(0.0, &cap), 0.0);
        // 1610 / (70 · 270e3 · 1e6 · 0.693147...)
        let oracle = 1610.0 / (70.0 * 270_000.0 * 1.0e6 * 2.0f64.ln());
        let c = capacitance_estimate(1610.0, &cap);
        assert!((c - oracle).abs() < 1e-22);
        assert!((c - 1.229e-10).abs() < 5e-14);
        assert_eq!(capacitance_estimate(3220.0, &cap), 2.0 * c);
    }

    #[test]
    fn charging_curve_points() {
        let (r, c) = (1.0e6, 1.0e-10);
        assert_eq!(rc_charge_voltage(0.0, 5.0, r, c), 0.0);
        let v = rc_charge_voltage(half_charge_time(r, c), 5.0, r, c);
        assert!((v - 2.5).abs() < 1e-12);
        let v5 = rc_charge_voltage(5.0 * r * c, 5.0, r, c);
        assert!((v5 - 5.0 * (1.0 - (-5.0f64).exp())).abs() < 1e-12);
        assert!((v5 - 4.966).abs() < 5e-4);
    }

    #[test]
    fn simulated_counting_recovers_capacitance() {
        let cap = CapacitiveParams::patch_64();
        for pf in [20.0, 80.0, 122.9, 150.0, 400.0] {
            let c = pf * 1e-12;
            let counts = simulate_charge_count(c, &cap, 5.0);
            let est = capacitance_estimate(counts as f64, &cap);
            assert!((est - c).abs() <= cap.counter_quantum(), "{pf} pF -> {est}");
        }
    }
}
