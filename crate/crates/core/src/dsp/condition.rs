use serde::{Deserialize, Serialize};

use super::DspError;
use crate::physics::DriftModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TareConfig {
    /// Minimum baseline length, s.
    pub min_duration: f64,
    /// Largest per-prexel standard deviation still accepted as unloaded, N.
    pub max_std: f64,
}

impl Default for TareConfig {
    fn default() -> Self {
        Self {
            min_duration: 1.0,
            max_std: 0.05,
        }
    }
}

/// Per-prexel force offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TareOffset {
    pub offsets: Vec<f64>,
}

impl TareOffset {
    pub fn zero(len: usize) -> Self {
        Self { offsets: vec![0.0; len] }
    }

    /// Subtracts the offsets, never going below 0 N.
    pub fn apply(&self, forces: &mut [f64]) {
        for (f, o) in forces.iter_mut().zip(&self.offsets) {
            *f = (*f - o).max(0.0);
        }
    }
}

/// Offsets from a block of baseline frames, each frame holding one force per
/// prexel. Refuses when the block is shorter than the configured duration or
/// any prexel moves more than `max_std`.
pub fn tare(baseline: &[Vec<f64>], sample_rate: f64, cfg: &TareConfig) -> Result<TareOffset, DspError> {
    let need = (cfg.min_duration * sample_rate).ceil() as usize;
    if baseline.len() < need.max(1) {
        return Err(DspError::TooFewValues {
            have: baseline.len(),
            need: need.max(1),
        });
    }
    let width = baseline[0].len();
    if let Some(bad) = baseline.iter().find(|f| f.len() != width) {
        return Err(DspError::LengthMismatch { a: width, b: bad.len() });
    }
    let n = baseline.len() as f64;
    let mut offsets = Vec::with_capacity(width);
    for ch in 0..width {
        let mean = baseline.iter().map(|f| f[ch]).sum::<f64>() / n;
        let var = baseline.iter().map(|f| (f[ch] - mean).powi(2)).sum::<f64>() / n;
        if var.sqrt() > cfg.max_std {
            return Err(DspError::LoadSuspected {
                channel: ch,
                std: var.sqrt(),
            });
        }
        offsets.push(mean);
    }
    Ok(TareOffset { offsets })
}

/// Removes the relaxation profile from a resistance series. Each sample is
/// divided by the normalised drift curve evaluated at the time since the
/// most recent onset at or before it; samples before the first onset pass
/// through unchanged.
pub fn compensate_drift(times: &[f64], resistance: &[f64], drift: &DriftModel, onsets: &[f64]) -> Vec<f64> {
    let mut onsets = onsets.to_vec();
    onsets.sort_by(f64::total_cmp);
    times
        .iter()
        .zip(resistance)
        .map(|(&t, &r)| {
            let k = onsets.partition_point(|&o| o <= t);
            if k == 0 {
                r
            } else {
                r / drift.normalized(t - onsets[k - 1])
            }
        })
        .collect()
}
