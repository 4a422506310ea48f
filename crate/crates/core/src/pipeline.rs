//! Host side of the link: decoded frames in, calibrated forces and proximity
//! estimates out.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::calibration::{
    distance_of_counter, force_of_conductance, ForceConductanceModel, ForceEstimate, ModelFile, Proximity,
    ProximityModel,
};
use crate::daq::{resistance_of_adc, DaqConfig};
use crate::dsp::{design_lowpass, DspError, FilterSpec, FilterState, Lowpass, TareConfig, TareOffset};
use crate::physics::SensorModel;
use crate::wire::{Frame, Payload, FLAG_SATURATED};

/// Calibrated view of one tactile scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceGrid {
    pub rows: usize,
    pub cols: usize,
    /// Tared force per prexel, N; readings below the reliable range count as 0.
    pub forces: Vec<f64>,
    pub unreliable: Vec<bool>,
    pub saturated: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityUpdate {
    pub raw: f64,
    pub filtered: f64,
    /// Distance from the raw counter.
    pub estimate: Proximity,
    /// Presence decided on the filtered counter.
    pub present: bool,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HostEvent {
    Tactile(ForceGrid),
    Proximity(ProximityUpdate),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostModels {
    pub force: ForceConductanceModel,
    /// Thresholds for single raw counter readings.
    pub proximity: ProximityModel,
    /// Same curve, thresholds for the low-passed counter.
    pub proximity_filtered: ProximityModel,
}

impl HostModels {
    /// Models matching the simulated sensor exactly: the conductance midline,
    /// the counter curve and the noise of the counter before and after filtering.
    pub fn from_sensor(model: &SensorModel, filter: &Lowpass) -> Self {
        let cap = &model.capacitive;
        let piezo = &model.piezo;
        let force = ForceConductanceModel::from_poly(
            piezo.conductance_poly.clone(),
            (piezo.min_reliable_force, piezo.force_range),
        );
        let proximity = ProximityModel::new(cap.cal_a, cap.base_counter, cap.base_sigma, 3.0, cap.detection_range);
        let sf = cap.base_sigma * filter.noise_gain();
        let proximity_filtered = ProximityModel::new(cap.cal_a, cap.base_counter, sf, 3.0, cap.detection_range);
        Self {
            force,
            proximity,
            proximity_filtered,
        }
    }

    /// Replaces whatever a model file provides. The filtered thresholds keep
    /// the filter's noise reduction relative to the fitted raw σ.
    pub fn with_file(mut self, file: &ModelFile, filter: &Lowpass) -> Self {
        if let Some(f) = &file.force {
            self.force = f.clone();
        }
        if let Some(p) = &file.proximity {
            self.proximity = p.clone();
            let sf = p.baseline_sigma * filter.noise_gain();
            self.proximity_filtered = ProximityModel::new(p.a, p.b, sf, 3.0, p.range);
        }
        self
    }
}

pub struct HostPipeline {
    daq: DaqConfig,
    rows: usize,
    cols: usize,
    range: f64,
    pub models: HostModels,
    filter: Lowpass,
    filter_state: Option<FilterState>,
    window: VecDeque<f64>,
    window_len: usize,
    tare: TareOffset,
    last_grid: Option<ForceGrid>,
    last_proximity: Option<ProximityUpdate>,
}

impl HostPipeline {
    pub fn new(model: &SensorModel, daq: &DaqConfig) -> Result<Self, DspError> {
        let filter = design_lowpass(FilterSpec::proximity(daq.proximity_rate))?;
        let models = HostModels::from_sensor(model, &filter);
        Ok(Self::with_models(model, daq, models, filter))
    }

    pub fn with_models(model: &SensorModel, daq: &DaqConfig, models: HostModels, filter: Lowpass) -> Self {
        let n = model.layout.len();
        Self {
            daq: daq.clone(),
            rows: model.layout.rows,
            cols: model.layout.cols,
            range: model.piezo.force_range,
            models,
            filter,
            filter_state: None,
            // a little over the 2 s touch window
            window_len: (3.0 * daq.proximity_rate).ceil() as usize,
            window: VecDeque::new(),
            tare: TareOffset::zero(n),
            last_grid: None,
            last_proximity: None,
        }
    }

    pub fn filter(&self) -> &Lowpass {
        &self.filter
    }

    pub fn on_frame(&mut self, frame: &Frame) -> Option<HostEvent> {
        match &frame.payload {
            Payload::Tactile { rows, cols, raw } => {
                if *rows as usize != self.rows || *cols as usize != self.cols {
                    return None;
                }
                let grid = self.calibrate(raw);
                self.last_grid = Some(grid.clone());
                Some(HostEvent::Tactile(grid))
            }
            Payload::Proximity { counter, flags } => {
                let u = self.on_counter(*counter as f64, flags & FLAG_SATURATED != 0);
                Some(HostEvent::Proximity(u))
            }
        }
    }

    /// Untared forces of one raw scan.
    pub fn raw_forces(&self, raw: &[u16]) -> Vec<(f64, ForceEstimate)> {
        raw.iter()
            .map(|&r| {
                let g = match resistance_of_adc(r, &self.daq) {
                    None => 0.0,
                    Some(ohm) if ohm <= 0.0 => f64::INFINITY,
                    Some(ohm) => 1.0 / ohm,
                };
                let est = force_of_conductance(g, &self.models.force);
                let f = match est {
                    ForceEstimate::Value { force, .. } => force,
                    ForceEstimate::Unreliable => 0.0,
                    ForceEstimate::Saturated => self.range,
                };
                (f, est)
            })
            .collect()
    }

    fn calibrate(&self, raw: &[u16]) -> ForceGrid {
        let est = self.raw_forces(raw);
        let mut forces: Vec<f64> = est.iter().map(|e| e.0).collect();
        self.tare.apply(&mut forces);
        ForceGrid {
            rows: self.rows,
            cols: self.cols,
            forces,
            unreliable: est.iter().map(|e| e.1 == ForceEstimate::Unreliable).collect(),
            saturated: est.iter().map(|e| e.1 == ForceEstimate::Saturated).collect(),
        }
    }

    fn on_counter(&mut self, raw: f64, saturated: bool) -> ProximityUpdate {
        let filter = &self.filter;
        let state = self.filter_state.get_or_insert_with(|| FilterState::settled(filter, raw));
        let filtered = state.process(filter, raw);
        self.window.push_back(filtered);
        while self.window.len() > self.window_len {
            self.window.pop_front();
        }
        let u = ProximityUpdate {
            raw,
            filtered,
            estimate: distance_of_counter(raw, &self.models.proximity),
            present: distance_of_counter(filtered, &self.models.proximity_filtered).is_present(),
            saturated,
        };
        self.last_proximity = Some(u);
        u
    }

    /// Filtered counters of the last few seconds, oldest first.
    pub fn proximity_window(&self) -> Vec<f64> {
        self.window.iter().copied().collect()
    }

    pub fn last_grid(&self) -> Option<&ForceGrid> {
        self.last_grid.as_ref()
    }

    pub fn last_proximity(&self) -> Option<ProximityUpdate> {
        self.last_proximity
    }

    /// Tares from a block of untared raw scans.
    pub fn tare_from(&mut self, scans: &[Vec<u16>], cfg: &TareConfig) -> Result<(), DspError> {
        let frames: Vec<Vec<f64>> = scans
            .iter()
            .map(|s| self.raw_forces(s).into_iter().map(|e| e.0).collect())
            .collect();
        self.tare = crate::dsp::tare(&frames, self.daq.tactile_rate, cfg)?;
        Ok(())
    }

    pub fn set_tare(&mut self, tare: TareOffset) {
        self.tare = tare;
    }

    pub fn tare_offset(&self) -> &TareOffset {
        &self.tare
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{GroundTruthState, LoadContext, LoadDirection};

    #[test]
    fn noiseless_force_round_trip_through_adc() {
        let model = SensorModel::preset("16px").unwrap();
        let cfg = DaqConfig::default();
        let mut truth = GroundTruthState::empty(2, 8);
        truth.set_force(0, 2, 8.1);
        truth.set_force(1, 5, 0.3);
        let loads = vec![LoadContext::fresh(LoadDirection::Loading); 16];
        // midline: no hysteresis offset for this check
        let mut m = model.clone();
        m.piezo.hysteresis_fraction = 0.0;
        let samples = crate::daq::scan_array(&truth, &loads, &cfg, &m, 0.0, None).unwrap();
        let raw: Vec<u16> = samples.iter().map(|s| s.raw).collect();
        let mut host = HostPipeline::new(&m, &cfg).unwrap();
        let Some(HostEvent::Tactile(grid)) = host.on_frame(&Frame::tactile(1, 0, 2, 8, raw)) else {
            panic!("expected a grid");
        };
        // one ADC step near 8 N is a few tenths of a newton
        assert!((grid.forces[2] - 8.1).abs() < 0.3, "{}", grid.forces[2]);
        assert!(grid.unreliable[8 + 5]);
        assert_eq!(grid.forces[8 + 5], 0.0);
        assert!(grid.forces.iter().enumerate().all(|(i, &f)| i == 2 || f == 0.0));
    }

    #[test]
    fn proximity_filter_starts_settled() {
        let model = SensorModel::preset("64px").unwrap();
        let cfg = DaqConfig::default();
        let mut host = HostPipeline::new(&model, &cfg).unwrap();
        for _ in 0..40 {
            let Some(HostEvent::Proximity(u)) = host.on_frame(&Frame::proximity(1, 0, 1610, false)) else {
                panic!()
            };
            assert!((u.filtered - 1610.0).abs() < 1e-9);
            assert!(!u.present);
            assert_eq!(u.estimate, Proximity::Absent);
        }
        assert_eq!(host.proximity_window().len(), 30);
    }

    #[test]
    fn filtered_threshold_is_tighter() {
        let model = SensorModel::preset("64px").unwrap();
        let host = HostPipeline::new(&model, &DaqConfig::default()).unwrap();
        let raw = host.models.proximity.detection_threshold - 1610.0;
        let filt = host.models.proximity_filtered.detection_threshold - 1610.0;
        assert!(filt < 0.6 * raw, "{filt} vs {raw}");
    }
}
