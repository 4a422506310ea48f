use serde::{Deserialize, Serialize};

use super::PhysicsError;

/// Critically damped stress-relaxation curve of a loaded prexel.
///
/// `R(t) = (ΔR + (A + B·ΔR)·t)·e^(−B·t) + R0 − ΔR`
///
/// This is the response of a critically damped spring-damper whose initial
/// displacement is `ΔR`, initial velocity is `A` and natural frequency is `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    /// Resistance at the instant the load is applied, Ω.
    pub r0: f64,
    /// Total asymptotic drop, Ω.
    pub delta_r: f64,
    /// Initial slope, Ω/s.
    pub a: f64,
    /// Natural frequency, 1/s.
    pub b: f64,
}

impl Default for DriftModel {
    /// Calibrated so an 8.1 N load loses 6.1 % of its resistance over 3 h.
    fn default() -> Self {
        let r0 = 870.0;
        let delta_r = 0.061 * r0;
        let b = 1.0e-3;
        Self {
            r0,
            delta_r,
            a: -0.5 * b * delta_r,
            b,
        }
    }
}

impl DriftModel {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.b > 0.0) || !(self.delta_r >= 0.0) || !(self.r0 > self.delta_r) {
            return Err(PhysicsError::InvalidParameter(format!(
                "drift model requires B > 0, ΔR ≥ 0, R0 > ΔR (got {self:?})"
            )));
        }
        Ok(())
    }

    pub fn resistance(&self, t: f64) -> f64 {
        drift_resistance(t, self)
    }

    /// `R(t) / R0`; multiplies any resistance loaded at `t = 0`.
    pub fn normalized(&self, t: f64) -> f64 {
        drift_resistance(t, self) / self.r0
    }

    /// Asymptotic resistance, `R0 − ΔR`.
    pub fn settled(&self) -> f64 {
        self.r0 - self.delta_r
    }

    /// The curve never rises above `R0` or undershoots `R0 − ΔR` exactly when
    /// `−B·ΔR ≤ A ≤ 0`.
    pub fn is_monotone(&self) -> bool {
        self.a <= 0.0 && self.a + self.b * self.delta_r >= 0.0
    }

    /// Same shape rescaled to a new starting resistance.
    pub fn scaled_to(&self, r0: f64) -> Self {
        let k = r0 / self.r0;
        Self {
            r0,
            delta_r: self.delta_r * k,
            a: self.a * k,
            b: self.b,
        }
    }
}

/// Direct evaluation of the relaxation curve. `t` is clamped at zero.
pub fn drift_resistance(t: f64, drift: &DriftModel) -> f64 {
    let DriftModel { r0, delta_r, a, b } = *drift;
    if t <= 0.0 {
        return r0;
    }
    (delta_r + (a + b * delta_r) * t) * (-b * t).exp() + r0 - delta_r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_r0() {
        let d = DriftModel::default();
        assert_eq!(drift_resistance(0.0, &d), d.r0);
    }

    #[test]
    fn settles_to_asymptote() {
        let d = DriftModel::default();
        let r = drift_resistance(50.0 / d.b, &d);
        assert!((r - d.settled()).abs() <= d.delta_r * 1e-6);
    }

    #[test]
    fn hand_evaluated_point() {
        let d = DriftModel {
            r0: 10_000.0,
            delta_r: 2_000.0,
            a: 0.0,
            b: 0.01,
        };
        // Independent evaluation of the same expression term by term.
        let oracle = 4000.0 * (-1.0f64).exp() + 8000.0;
        let r = drift_resistance(100.0, &d);
        assert!((r - oracle).abs() < 1e-9);
        assert!((r - 9471.5).abs() < 0.05);
    }

    #[test]
    fn default_loses_six_percent_in_three_hours() {
        let d = DriftModel::default();
        let drop = 1.0 - d.normalized(3.0 * 3600.0);
        assert!((0.05..=0.07).contains(&drop), "drop {drop}");
    }

    #[test]
    fn monotone_on_grid() {
        for a_frac in [0.0, -0.25, -0.5, -1.0] {
            let mut d = DriftModel::default();
            d.a = a_frac * d.b * d.delta_r;
            assert!(d.is_monotone());
            let horizon = 20.0 / d.b;
            let mut prev = f64::INFINITY;
            for i in 0..1000 {
                let r = d.resistance(horizon * i as f64 / 999.0);
                assert!(r <= prev + 1e-12, "rise at step {i}");
                prev = r;
            }
        }
    }

    #[test]
    fn positive_slope_rises_first() {
        let mut d = DriftModel::default();
        d.a = 0.1;
        assert!(!d.is_monotone());
        assert!(d.resistance(1.0) > d.r0);
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        let mut d = DriftModel::default();
        d.b = 0.0;
        assert!(d.validate().is_err());
        let mut d = DriftModel::default();
        d.delta_r = d.r0;
        assert!(d.validate().is_err());
    }
}
