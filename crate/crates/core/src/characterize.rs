//! Bench characterisation of a simulated sensor: the figures of a datasheet
//! table, each measured by running the same procedure a test rig would.

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::daq::{adc_of_resistance, resistance_of_adc, Daq, DaqConfig, DaqError, TimedFrame};
use crate::dsp::{hysteresis_error, relative_change, repeatability, step_metrics, DspError, StepMetrics};
use crate::physics::{resistance_of, GroundTruthState, LoadTracker, PhysicsError, SensorModel};
use crate::pipeline::{HostEvent, HostPipeline};
use crate::scenario::{Action, Scenario, ScenarioError, ScenarioTruth};
use crate::wire::Payload;

#[derive(Debug, Error)]
pub enum CharacterizeError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Daq(#[from] DaqError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Data(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharacterizeConfig {
    /// `None` runs every procedure noiseless.
    pub seed: Option<u64>,
    pub hysteresis_cycles: usize,
    /// Force step of the load/unload staircase, N.
    pub hysteresis_step: f64,
    pub repeat_runs: usize,
    /// N
    pub test_load: f64,
    pub drift_hours: f64,
    pub step_rate: f64,
    /// Hand distances tried for the detection range, mm.
    pub range_probe: Vec<f64>,
    pub range_trials: u64,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        Self {
            seed: Some(0),
            hysteresis_cycles: 16,
            hysteresis_step: 0.25,
            repeat_runs: 6,
            test_load: 8.1,
            drift_hours: 3.0,
            step_rate: 10_000.0,
            range_probe: (1..=20).map(|i| 10.0 * i as f64).collect(),
            range_trials: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characterization {
    /// `rows x cols`
    pub layout: String,
    /// N
    pub min_force: f64,
    /// Range over mean of six loads, %.
    pub repeatability: f64,
    /// Resistance change after the drift test, % of the initial value.
    pub static_loading: f64,
    /// Least-squares slope of the resistance change against log10(minutes), %.
    pub drift_per_log_min: f64,
    /// mm
    pub detection_range: f64,
    /// Mean over cycles, fraction of full-scale span.
    pub hysteresis: f64,
    pub hysteresis_min: f64,
    pub hysteresis_max: f64,
    pub step: StepMetrics,
    /// Conductance slope at mid-range, S/N.
    pub sensitivity: f64,
    /// Force per ADC count at the low and high end of the range, N.
    pub resolution: (f64, f64),
}

pub fn characterize(
    model: &SensorModel,
    daq: &DaqConfig,
    cfg: &CharacterizeConfig,
) -> Result<Characterization, CharacterizeError> {
    model.validate()?;
    daq.validate()?;
    let hyst = hysteresis_cycles(model, cfg)?;
    let (static_loading, drift_per_log_min) = drift_test(model, daq, cfg)?;
    let piezo = &model.piezo;
    let (t, v) = model.step.sample(1.0, 0.02, cfg.step_rate, 0.5);
    let mid = 0.5 * (piezo.min_reliable_force + piezo.force_range);
    Ok(Characterization {
        layout: format!("{}x{}", model.layout.rows, model.layout.cols),
        min_force: piezo.min_reliable_force,
        repeatability: repeatability(&repeat_runs(model, daq, cfg)?)?,
        static_loading,
        drift_per_log_min,
        detection_range: detection_range(model, daq, cfg)?,
        hysteresis: hyst.iter().sum::<f64>() / hyst.len() as f64,
        hysteresis_min: hyst.iter().copied().fold(f64::INFINITY, f64::min),
        hysteresis_max: hyst.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        step: step_metrics(&t, &v)?,
        sensitivity: piezo.conductance_poly.derivative().eval(mid),
        resolution: resolution(model, daq),
    })
}

fn rng(seed: Option<u64>, stream: u64) -> Option<ChaCha8Rng> {
    seed.map(|s| {
        let mut r = ChaCha8Rng::seed_from_u64(s);
        r.set_stream(stream);
        r
    })
}

/// Staircase load/unload cycles on one prexel, conductance read at each step.
pub fn hysteresis_cycles(model: &SensorModel, cfg: &CharacterizeConfig) -> Result<Vec<f64>, CharacterizeError> {
    let piezo = &model.piezo;
    let mut rng = rng(cfg.seed, 1);
    let mut tracker = LoadTracker::default();
    let lo = piezo.min_reliable_force;
    let n = ((piezo.force_range - lo) / cfg.hysteresis_step).floor() as usize;
    let steps: Vec<f64> = (0..=n).map(|i| lo + cfg.hysteresis_step * i as f64).collect();
    let mut t = 0.0;
    let mut sample = |f: f64| -> Result<(f64, f64), CharacterizeError> {
        let ctx = tracker.observe(f, t, piezo, rng.as_mut().map(|r| r as &mut dyn RngCore));
        let r = resistance_of(f, &ctx, piezo, &model.drift, rng.as_mut().map(|r| r as &mut dyn RngCore))?;
        t += 0.01;
        Ok((f, 1.0 / r.resistance))
    };
    let mut out = Vec::with_capacity(cfg.hysteresis_cycles);
    for _ in 0..cfg.hysteresis_cycles {
        let load = steps.iter().map(|&f| sample(f)).collect::<Result<Vec<_>, _>>()?;
        let unload = steps.iter().rev().map(|&f| sample(f)).collect::<Result<Vec<_>, _>>()?;
        out.push(hysteresis_error(&load, &unload)?);
    }
    Ok(out)
}

/// Mean plateau conductance of each of `repeat_runs` presses on prexel (0, 0).
pub fn repeat_runs(model: &SensorModel, daq: &DaqConfig, cfg: &CharacterizeConfig) -> Result<Vec<f64>, CharacterizeError> {
    let period = 3.0;
    let mut sc = Scenario::default();
    for k in 0..cfg.repeat_runs {
        let t0 = period * k as f64 + 0.5;
        sc.push(t0, Action::Press { row: 0, col: 0, force: cfg.test_load, ramp: 0.0 });
        sc.push(t0 + 2.0, Action::Release { row: 0, col: 0, ramp: 0.0 });
    }
    let mut truth = ScenarioTruth::new(sc, model.layout.rows, model.layout.cols)?;
    let seed = cfg.seed.map(|s| s.wrapping_add(2));
    let mut d = Daq::new(model.clone(), daq.clone(), seed)?;
    let frames = d.run_until(&mut truth, period * cfg.repeat_runs as f64)?;
    let mut sums = vec![(0.0, 0usize); cfg.repeat_runs];
    for tf in frames {
        let Payload::Tactile { raw, .. } = &tf.frame.payload else { continue };
        let k = (tf.t / period) as usize;
        let local = tf.t - period * k as f64;
        if k < cfg.repeat_runs && (0.7..2.3).contains(&local) {
            if let Some(r) = resistance_of_adc(raw[0], daq).filter(|r| *r > 0.0) {
                sums[k].0 += 1.0 / r;
                sums[k].1 += 1;
            }
        }
    }
    if sums.iter().any(|s| s.1 == 0) {
        return Err(CharacterizeError::Data("a press produced no usable readings".into()));
    }
    Ok(sums.iter().map(|(s, n)| s / *n as f64).collect())
}

/// Constant load on prexel (0, 0) sampled once a second.
/// Returns the static-loading change and the per-decade drift, both in %.
pub fn drift_test(model: &SensorModel, daq: &DaqConfig, cfg: &CharacterizeConfig) -> Result<(f64, f64), CharacterizeError> {
    let rate = DaqConfig {
        tactile_rate: 1.0,
        proximity_rate: 1.0,
        ..daq.clone()
    };
    let mut sc = Scenario::default();
    sc.push(0.0, Action::Press { row: 0, col: 0, force: cfg.test_load, ramp: 0.0 });
    let mut truth = ScenarioTruth::new(sc, model.layout.rows, model.layout.cols)?;
    let seed = cfg.seed.map(|s| s.wrapping_add(3));
    let mut d = Daq::new(model.clone(), rate.clone(), seed)?;
    let frames = d.run_until(&mut truth, cfg.drift_hours * 3600.0)?;
    let (times, ohms) = prexel_series(&frames, 0, &rate);
    let head = ohms.first().copied().ok_or_else(|| CharacterizeError::Data("no readings".into()))?;
    let change = -relative_change(&ohms, 10)? * 100.0;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&ohms)
        .filter(|(t, _)| **t >= 60.0)
        .map(|(t, r)| ((t / 60.0).log10(), 100.0 * (head - r) / head))
        .collect();
    Ok((change, slope(&pts)))
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Times and resistances of one prexel, skipping open-circuit readings.
pub fn prexel_series(frames: &[TimedFrame], index: usize, daq: &DaqConfig) -> (Vec<f64>, Vec<f64>) {
    let mut times = Vec::new();
    let mut ohms = Vec::new();
    for tf in frames {
        if let Payload::Tactile { raw, .. } = &tf.frame.payload {
            if let Some(r) = raw.get(index).and_then(|&v| resistance_of_adc(v, daq)) {
                times.push(tf.t);
                ohms.push(r);
            }
        }
    }
    (times, ohms)
}

/// Farthest probe distance up to which every trial reports presence.
pub fn detection_range(model: &SensorModel, daq: &DaqConfig, cfg: &CharacterizeConfig) -> Result<f64, CharacterizeError> {
    let settle = 5.0;
    let cfg_d = DaqConfig {
        tactile_rate: daq.proximity_rate,
        ..daq.clone()
    };
    let mut best = 0.0;
    let mut probes = cfg.range_probe.clone();
    probes.sort_by(f64::total_cmp);
    let trials = if cfg.seed.is_some() { cfg.range_trials } else { 1 };
    for (i, &x) in probes.iter().enumerate() {
        for k in 0..trials {
            let seed = cfg.seed.map(|s| s.wrapping_add(1000 * i as u64 + k));
            let mut host = HostPipeline::new(model, &cfg_d)?;
            let mut d = Daq::new(model.clone(), cfg_d.clone(), seed)?;
            let (rows, cols) = (model.layout.rows, model.layout.cols);
            let mut truth = move |_t: f64| GroundTruthState::empty(rows, cols).with_hand(x);
            let mut present = false;
            while d.next_time() < settle {
                let tf = d.step(&mut truth)?;
                if let Some(HostEvent::Proximity(u)) = host.on_frame(&tf.frame) {
                    present = u.present;
                }
            }
            if !present {
                return Ok(best);
            }
        }
        best = x;
    }
    Ok(best)
}

/// Smallest force change that moves the ADC by one count, at both ends of the
/// reliable range.
pub fn resolution(model: &SensorModel, daq: &DaqConfig) -> (f64, f64) {
    let piezo = &model.piezo;
    let raw = |f: f64| adc_of_resistance(1.0 / piezo.mean_conductance(f), daq);
    let step_at = |f: f64, dir: f64| {
        let r0 = raw(f);
        let mut df = 1e-4;
        while df < piezo.force_range && raw(f + dir * df) == r0 {
            df += 1e-4;
        }
        df
    };
    (step_at(piezo.min_reliable_force, 1.0), step_at(piezo.force_range, -1.0))
}

impl Characterization {
    /// Plain-text datasheet table.
    pub fn table(&self) -> String {
        let rows = [
            ("Minimal detectable force (force sensing)", format!("{} N", self.min_force)),
            ("Single point repeatability (at 8.1 N)", format!("{:.1}%", self.repeatability)),
            ("Static loading (relative to initial)", format!("{:.1}%", self.static_loading)),
            ("Drift (constant force of 8.1 N)", format!("{:.1}% per log(min)", self.drift_per_log_min)),
            ("Presence detection range (proximity sensing)", format!("0-{:.0} mm", self.detection_range)),
            (
                "Hysteresis (force sensing)",
                format!(
                    "{:.1}% ({:.1}-{:.1})",
                    self.hysteresis * 100.0,
                    self.hysteresis_min * 100.0,
                    self.hysteresis_max * 100.0
                ),
            ),
            ("Rise time (force sensing)", format!("{:.1} ms", self.step.rise_time * 1e3)),
            ("Delay time (force sensing)", format!("{:.1} ms", self.step.delay_time * 1e3)),
            ("Sensitivity (force sensing)", format!("{:.3e} S/N", self.sensitivity)),
            (
                "Resolution (force sensing)",
                format!("{:.4}-{:.3} N", self.resolution.0, self.resolution.1),
            ),
        ];
        let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w$}  Value", "Parameter");
        let _ = writeln!(out, "{}", "-".repeat(w + 24));
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<w$}  {v}");
        }
        out
    }
}

/// What can be read off a recorded capture without knowing the applied loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureSummary {
    pub tactile_frames: u64,
    pub proximity_frames: u64,
    /// s
    pub duration: f64,
    /// Prexel with the highest mean conductance, if any was loaded.
    pub loaded_prexel: Option<(usize, usize)>,
    /// Head-to-tail resistance change of that prexel, %.
    pub static_loading: Option<f64>,
    pub counter_mean: Option<f64>,
    pub counter_sd: Option<f64>,
    pub saturated_counters: u64,
}

pub fn summarize_capture(frames: &[TimedFrame], cols: usize, daq: &DaqConfig) -> CaptureSummary {
    let mut tactile = 0;
    let mut counters = Vec::new();
    let mut saturated = 0;
    let mut sums: Vec<f64> = Vec::new();
    for tf in frames {
        match &tf.frame.payload {
            Payload::Tactile { raw, .. } => {
                tactile += 1;
                sums.resize(sums.len().max(raw.len()), 0.0);
                for (s, &v) in sums.iter_mut().zip(raw) {
                    *s += resistance_of_adc(v, daq).filter(|r| *r > 0.0).map_or(0.0, |r| 1.0 / r);
                }
            }
            Payload::Proximity { counter, flags } => {
                counters.push(*counter as f64);
                if flags & crate::wire::FLAG_SATURATED != 0 {
                    saturated += 1;
                }
            }
        }
    }
    let duration = frames.last().map_or(0.0, |tf| tf.t) - frames.first().map_or(0.0, |tf| tf.t);
    let idle = 1.0 / daq.ref_resistor.max(1.0) * 1e-3;
    let loaded = sums
        .iter()
        .enumerate()
        .filter(|(_, s)| **s / tactile.max(1) as f64 > idle)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k);
    let static_loading = loaded.and_then(|k| {
        let (_, ohms) = prexel_series(frames, k, daq);
        relative_change(&ohms, 10).ok().map(|c| -c * 100.0)
    });
    let (mean, sd) = if counters.is_empty() {
        (None, None)
    } else {
        let n = counters.len() as f64;
        let m = counters.iter().sum::<f64>() / n;
        let v = counters.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (Some(m), Some(v.sqrt()))
    };
    CaptureSummary {
        tactile_frames: tactile,
        proximity_frames: counters.len() as u64,
        duration,
        loaded_prexel: loaded.map(|k| (k / cols.max(1), k % cols.max(1))),
        static_loading,
        counter_mean: mean,
        counter_sd: sd,
        saturated_counters: saturated,
    }
}
