use serde::{Deserialize, Serialize};

/// Which side of the divider the reference resistor sits on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DividerOrientation {
    /// Reference resistor to ground; ADC reads across it.
    #[default]
    RefLow,
    /// Prexel to ground; ADC reads across the prexel.
    RefHigh,
}

/// Acquisition electronics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DaqConfig {
    pub vcc: f64,
    pub adc_bits: u32,
    pub ref_resistor: f64,
    /// Between send and receive pins of the capacitive loop, Ω.
    pub series_resistor: f64,
    pub n_cycles: u32,
    pub tactile_rate: f64,
    pub proximity_rate: f64,
    pub divider_orientation: DividerOrientation,
    pub sensor_id: u8,
    /// Spacing of successive conversions inside one scan, s.
    pub conversion_time: f64,
}

impl Default for DaqConfig {
    fn default() -> Self {
        Self {
            vcc: 5.0,
            adc_bits: 10,
            ref_resistor: 1_000.0,
            series_resistor: 1.0e6,
            n_cycles: 70,
            tactile_rate: 100.0,
            proximity_rate: 10.0,
            divider_orientation: DividerOrientation::RefLow,
            sensor_id: 1,
            conversion_time: 104e-6,
        }
    }
}

impl DaqConfig {
    pub fn validate(&self) -> Result<(), super::DaqError> {
        if !(8..=16).contains(&self.adc_bits) {
            return Err(super::DaqError::Config(format!("adc_bits {} outside [8, 16]", self.adc_bits)));
        }
        if !(self.proximity_rate > 0.0 && self.tactile_rate >= self.proximity_rate) {
            return Err(super::DaqError::Config(format!(
                "rates must satisfy tactile ({}) ≥ proximity ({}) > 0",
                self.tactile_rate, self.proximity_rate
            )));
        }
        if !(self.vcc > 0.0 && self.ref_resistor > 0.0 && self.series_resistor > 0.0) || self.n_cycles == 0 {
            return Err(super::DaqError::Config("electrical values must be positive".into()));
        }
        Ok(())
    }

    pub fn full_scale(&self) -> u16 {
        ((1u32 << self.adc_bits) - 1) as u16
    }
}

/// ADC count for a prexel resistance. `f64::INFINITY` is an open circuit.
pub fn adc_of_resistance(r_prexel: f64, cfg: &DaqConfig) -> u16 {
    let full = cfg.full_scale() as f64;
    let fraction = ref_fraction(r_prexel, cfg.ref_resistor);
    let fraction = match cfg.divider_orientation {
        DividerOrientation::RefLow => fraction,
        DividerOrientation::RefHigh => 1.0 - fraction,
    };
    (fraction * full).round() as u16
}

/// Share of the supply across the reference resistor.
fn ref_fraction(r_prexel: f64, r_ref: f64) -> f64 {
    if r_prexel.is_infinite() {
        0.0
    } else {
        r_ref / (r_ref + r_prexel.max(0.0))
    }
}

/// Inverse of [`adc_of_resistance`]; `None` means open circuit.
pub fn resistance_of_adc(raw: u16, cfg: &DaqConfig) -> Option<f64> {
    resistance_at(raw as f64, cfg)
}

/// Resistance at a possibly fractional ADC position.
fn resistance_at(raw: f64, cfg: &DaqConfig) -> Option<f64> {
    let full = cfg.full_scale() as f64;
    let raw = raw.clamp(0.0, full);
    let ref_counts = match cfg.divider_orientation {
        DividerOrientation::RefLow => raw,
        DividerOrientation::RefHigh => full - raw,
    };
    if ref_counts <= 0.0 {
        None
    } else {
        Some(cfg.ref_resistor * (full - ref_counts) / ref_counts)
    }
}

/// Resistance interval that quantises to `raw`: the half-step either side
/// mapped through the divider. An open bound is `f64::INFINITY`.
pub fn adc_cell(raw: u16, cfg: &DaqConfig) -> (f64, f64) {
    let a = resistance_at(raw as f64 - 0.5, cfg).unwrap_or(f64::INFINITY);
    let b = resistance_at(raw as f64 + 0.5, cfg).unwrap_or(f64::INFINITY);
    (a.min(b), a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divider_fixed_points() {
        let cfg = DaqConfig::default();
        assert_eq!(adc_of_resistance(f64::INFINITY, &cfg), 0);
        assert_eq!(adc_of_resistance(1_000.0, &cfg), 512);
        assert_eq!(adc_of_resistance(0.0, &cfg), 1023);
        assert_eq!(resistance_of_adc(0, &cfg), None);
        assert_eq!(resistance_of_adc(1023, &cfg), Some(0.0));
    }

    #[test]
    fn inverse_at_mid_scale_within_one_step() {
        let cfg = DaqConfig::default();
        let r = resistance_of_adc(512, &cfg).unwrap();
        let (lo, hi) = adc_cell(512, &cfg);
        assert!(lo <= 1000.0 && 1000.0 <= hi);
        // One full step around 512 spans hi − lo.
        assert!((r - 1000.0).abs() <= hi - lo);
    }

    #[test]
    fn raw_round_trip_is_exact() {
        for orientation in [DividerOrientation::RefLow, DividerOrientation::RefHigh] {
            for bits in [8, 10, 12, 16] {
                let cfg = DaqConfig {
                    adc_bits: bits,
                    divider_orientation: orientation,
                    ..DaqConfig::default()
                };
                for raw in 0..=cfg.full_scale() {
                    let r = resistance_of_adc(raw, &cfg).unwrap_or(f64::INFINITY);
                    assert_eq!(adc_of_resistance(r, &cfg), raw, "{orientation:?} {bits} bits raw {raw}");
                }
            }
        }
    }

    #[test]
    fn ref_high_inverts_direction() {
        let cfg = DaqConfig {
            divider_orientation: DividerOrientation::RefHigh,
            ..DaqConfig::default()
        };
        assert_eq!(adc_of_resistance(f64::INFINITY, &cfg), 1023);
        assert_eq!(adc_of_resistance(0.0, &cfg), 0);
        assert!(adc_of_resistance(500.0, &cfg) < adc_of_resistance(2000.0, &cfg));
    }

    #[test]
    fn config_validation() {
        assert!(DaqConfig::default().validate().is_ok());
        let bad = DaqConfig {
            adc_bits: 20,
            ..DaqConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = DaqConfig {
            tactile_rate: 5.0,
            ..DaqConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
