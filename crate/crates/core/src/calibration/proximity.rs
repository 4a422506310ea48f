use serde::{Deserialize, Serialize};

use super::CalibrationError;

/// Closest distance ever reported, mm.
pub const MIN_DISTANCE: f64 = 1.0;

/// `counter = a / x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityModel {
    /// counts·mm
    pub a: f64,
    /// Baseline counter with nothing in range.
    pub b: f64,
    /// Standard deviation of the baseline, counts.
    pub baseline_sigma: f64,
    /// Presence is declared strictly above this level.
    pub detection_threshold: f64,
    /// Largest distance reported as a number, mm.
    pub range: f64,
}

impl ProximityModel {
    /// Threshold at `b + k·σ`.
    pub fn new(a: f64, b: f64, baseline_sigma: f64, k: f64, range: f64) -> Self {
        Self {
            a,
            b,
            baseline_sigma,
            detection_threshold: b + k * baseline_sigma,
            range,
        }
    }

    pub fn counter(&self, distance: f64) -> f64 {
        self.a / distance + self.b
    }

    /// Distance at which the noiseless counter crosses the threshold, mm.
    pub fn detection_distance(&self) -> f64 {
        self.a / (self.detection_threshold - self.b)
    }
}

/// Fits `a` by least squares on `counter − b` against `1/x`, with `b` and σ
/// from the baseline segment and the threshold at `b + 3σ`.
pub fn fit_proximity(baseline: &[f64], pairs: &[(f64, f64)], range: f64) -> Result<ProximityModel, CalibrationError> {
    if baseline.is_empty() {
        return Err(CalibrationError::InsufficientData("no baseline samples".into()));
    }
    let mut distances: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    distances.sort_by(f64::total_cmp);
    distances.dedup();
    if distances.len() < 2 {
        return Err(CalibrationError::InsufficientData(format!(
            "{} distinct distances, need at least 2",
            distances.len()
        )));
    }
    if distances[0] <= 0.0 {
        return Err(CalibrationError::InsufficientData("distances must be positive".into()));
    }
    let nb = baseline.len() as f64;
    let b = baseline.iter().sum::<f64>() / nb;
    let sigma = if baseline.len() > 1 {
        (baseline.iter().map(|v| (v - b).powi(2)).sum::<f64>() / (nb - 1.0)).sqrt()
    } else {
        0.0
    };
    let (num, den) = pairs.iter().fold((0.0, 0.0), |(n, d), &(x, c)| {
        let u = 1.0 / x;
        (n + u * (c - b), d + u * u)
    });
    let a = num / den;
    if !(a > 0.0) {
        return Err(CalibrationError::NonPhysical(format!("fitted a = {a}")));
    }
    Ok(ProximityModel::new(a, b, sigma, 3.0, range))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proximity {
    Absent,
    At { distance: f64 },
    /// Something is there but farther than the resolvable range.
    Unresolved,
}

impl Proximity {
    pub fn is_present(&self) -> bool {
        !matches!(self, Proximity::Absent)
    }

    pub fn distance(&self) -> Option<f64> {
        match self {
            Proximity::At { distance } => Some(*distance),
            _ => None,
        }
    }
}

pub fn distance_of_counter(counter: f64, model: &ProximityModel) -> Proximity {
    if !(counter > model.detection_threshold) || counter <= model.b {
        return Proximity::Absent;
    }
    let x = model.a / (counter - model.b);
    if x > model.range {
        Proximity::Unresolved
    } else {
        Proximity::At {
            distance: x.max(MIN_DISTANCE),
        }
    }
}
