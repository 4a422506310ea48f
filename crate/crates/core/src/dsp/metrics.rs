use serde::{Deserialize, Serialize};

use super::DspError;

/// Largest gap between the loading and unloading branches over their shared
/// force span, as a fraction of the full-scale output span.
///
/// Each curve is a list of `(force, output)` points; they are sorted by
/// force and interpolated linearly. The full-scale span is the mean of the
/// two branches' output ranges inside the shared span.
pub fn hysteresis_error(load: &[(f64, f64)], unload: &[(f64, f64)]) -> Result<f64, DspError> {
    let load = sorted(load)?;
    let unload = sorted(unload)?;
    let lo = load[0].0.max(unload[0].0);
    let hi = load[load.len() - 1].0.min(unload[unload.len() - 1].0);
    if lo >= hi {
        return Err(DspError::SpanMismatch { lo, hi });
    }
    let mut grid: Vec<f64> = load
        .iter()
        .chain(unload.iter())
        .map(|p| p.0)
        .filter(|f| (lo..=hi).contains(f))
        .chain([lo, hi])
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut gap: f64 = 0.0;
    let (mut lmin, mut lmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &f in &grid {
        let yl = interp(&load, f);
        let yu = interp(&unload, f);
        gap = gap.max((yl - yu).abs());
        lmin = lmin.min(yl);
        lmax = lmax.max(yl);
        umin = umin.min(yu);
        umax = umax.max(yu);
    }
    let span = 0.5 * ((lmax - lmin) + (umax - umin));
    if span <= 0.0 {
        return Ok(0.0);
    }
    Ok(gap / span)
}

fn sorted(curve: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, DspError> {
    if curve.len() < 2 {
        return Err(DspError::TooFewValues { have: curve.len(), need: 2 });
    }
    let mut c = curve.to_vec();
    c.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(c)
}

fn interp(curve: &[(f64, f64)], x: f64) -> f64 {
    let i = curve.partition_point(|p| p.0 < x);
    if i == 0 {
        return curve[0].1;
    }
    if i == curve.len() {
        return curve[i - 1].1;
    }
    let (x0, y0) = curve[i - 1];
    let (x1, y1) = curve[i];
    if x1 == x0 {
        y1
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Onset to 50 %, s.
    pub delay_time: f64,
    /// 10 % to 90 %, s.
    pub rise_time: f64,
    pub steady_state: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepConfig {
    /// Trailing share of samples treated as settled.
    pub tail_fraction: f64,
    /// Allowed deviation inside the tail, relative to the step amplitude.
    pub settle_band: f64,
    /// Departure from the initial level that marks the onset, relative to the amplitude.
    pub onset_fraction: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            tail_fraction: 0.10,
            settle_band: 0.02,
            onset_fraction: 0.002,
        }
    }
}

pub fn step_metrics(times: &[f64], values: &[f64]) -> Result<StepMetrics, DspError> {
    step_metrics_with(times, values, &StepConfig::default())
}

pub fn step_metrics_with(times: &[f64], values: &[f64], cfg: &StepConfig) -> Result<StepMetrics, DspError> {
    let n = values.len();
    if n != times.len() {
        return Err(DspError::LengthMismatch { a: times.len(), b: n });
    }
    let tail = ((n as f64 * cfg.tail_fraction).ceil() as usize).max(1);
    if n < tail + 2 {
        return Err(DspError::TooFewValues { have: n, need: tail + 2 });
    }
    let settled = &values[n - tail..];
    let steady = settled.iter().sum::<f64>() / tail as f64;
    let v0 = values[0];
    let amplitude = steady - v0;
    if amplitude == 0.0 || !amplitude.is_finite() {
        return Err(DspError::NoStep);
    }
    if settled.iter().any(|v| ((v - steady) / amplitude).abs() > cfg.settle_band) {
        return Err(DspError::NotSettled);
    }
    let norm: Vec<f64> = values.iter().map(|v| (v - v0) / amplitude).collect();
    let departure = norm.iter().position(|u| u.abs() > cfg.onset_fraction).ok_or(DspError::NoStep)?;
    let onset = times[departure.saturating_sub(1)];
    let cross = |level: f64| -> Result<f64, DspError> {
        let i = norm.iter().position(|&u| u >= level).ok_or(DspError::NoStep)?;
        if i == 0 {
            return Ok(times[0]);
        }
        let (u0, u1) = (norm[i - 1], norm[i]);
        Ok(times[i - 1] + (times[i] - times[i - 1]) * (level - u0) / (u1 - u0))
    };
    Ok(StepMetrics {
        delay_time: cross(0.5)? - onset,
        rise_time: cross(0.9)? - cross(0.1)?,
        steady_state: steady,
    })
}

/// Full spread over mean, in percent.
pub fn repeatability(values: &[f64]) -> Result<f64, DspError> {
    if values.len() < 2 {
        return Err(DspError::TooFewValues { have: values.len(), need: 2 });
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean <= 0.0 {
        return Err(DspError::NonPositiveMean(mean));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(100.0 * (max - min) / mean)
}

/// Change from the mean of the first `window` samples to the mean of the
/// last `window`, relative to the first.
pub fn relative_change(values: &[f64], window: usize) -> Result<f64, DspError> {
    let w = window.max(1);
    if values.len() < w {
        return Err(DspError::TooFewValues { have: values.len(), need: w });
    }
    let head = values[..w].iter().sum::<f64>() / w as f64;
    let tail = values[values.len() - w..].iter().sum::<f64>() / w as f64;
    if head == 0.0 {
        return Err(DspError::NonPositiveMean(head));
    }
    Ok((tail - head) / head)
}
