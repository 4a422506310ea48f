//! Emulated acquisition board: multiplexed divider scan of the prexel array,
//! charge-cycle counting on the electrode, and paced frame output.

mod convert;
mod queue;
mod run;

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convert::{adc_cell, adc_of_resistance, resistance_of_adc, DaqConfig, DividerOrientation};
pub use queue::{BoundedQueue, FrameQueue};
pub use run::{Daq, RunStats, TimedFrame, TruthSource};

use crate::physics::{
    counter_of_truth, resistance_of, CapacitiveParams, GroundTruthState, LoadContext, LoadTracker,
    PhysicsError, SensorLayout, SensorModel,
};

#[derive(Debug, Error)]
pub enum DaqError {
    #[error("ground truth is {truth_rows}x{truth_cols} but the layout is {rows}x{cols}")]
    LayoutMismatch {
        rows: usize,
        cols: usize,
        truth_rows: usize,
        truth_cols: usize,
    },
    #[error("daq config: {0}")]
    Config(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// Select lines of the row and column multiplexers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MuxAddress {
    pub row_sel: u8,
    pub col_sel: u8,
}

impl MuxAddress {
    /// The three select bits (S0, S1, S2) of the row and column multiplexers.
    pub fn select_bits(&self) -> ([bool; 3], [bool; 3]) {
        let bits = |v: u8| [v & 1 != 0, v & 2 != 0, v & 4 != 0];
        (bits(self.row_sel), bits(self.col_sel))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcSample {
    pub address: MuxAddress,
    pub raw: u16,
    /// Simulated time of the conversion, s.
    pub timestamp: f64,
}

/// Row-major mux order for a layout.
pub fn scan_order(layout: &SensorLayout) -> impl Iterator<Item = MuxAddress> + '_ {
    (0..layout.rows).flat_map(move |r| {
        (0..layout.cols).map(move |c| MuxAddress {
            row_sel: r as u8,
            col_sel: c as u8,
        })
    })
}

/// One pass over every prexel. `loads` holds the load context of each prexel
/// in row-major order. Forces beyond the characterised range are read as
/// full scale.
pub fn scan_array(
    truth: &GroundTruthState,
    loads: &[LoadContext],
    cfg: &DaqConfig,
    model: &SensorModel,
    t: f64,
    mut noise: Option<&mut dyn RngCore>,
) -> Result<Vec<AdcSample>, DaqError> {
    let layout = &model.layout;
    check_dims(truth, layout)?;
    let mut out = Vec::with_capacity(layout.len());
    for (k, address) in scan_order(layout).enumerate() {
        let force = truth.forces[k].min(model.piezo.force_range);
        let reading = resistance_of(force, &loads[k], &model.piezo, &model.drift, crate::reborrow(&mut noise))?;
        out.push(AdcSample {
            address,
            raw: adc_of_resistance(reading.resistance, cfg),
            timestamp: t + k as f64 * cfg.conversion_time,
        });
    }
    Ok(out)
}

fn check_dims(truth: &GroundTruthState, layout: &SensorLayout) -> Result<(), DaqError> {
    if truth.rows != layout.rows || truth.cols != layout.cols || truth.forces.len() != layout.len() {
        return Err(DaqError::LayoutMismatch {
            rows: layout.rows,
            cols: layout.cols,
            truth_rows: truth.rows,
            truth_cols: truth.cols,
        });
    }
    Ok(())
}

/// Keeps one [`LoadTracker`] per prexel and scans with the resulting contexts.
#[derive(Debug, Clone)]
pub struct TactileScanner {
    trackers: Vec<LoadTracker>,
}

impl TactileScanner {
    pub fn new(layout: &SensorLayout) -> Self {
        Self {
            trackers: vec![LoadTracker::default(); layout.len()],
        }
    }

    pub fn scan(
        &mut self,
        truth: &GroundTruthState,
        cfg: &DaqConfig,
        model: &SensorModel,
        t: f64,
        mut noise: Option<&mut dyn RngCore>,
    ) -> Result<Vec<AdcSample>, DaqError> {
        check_dims(truth, &model.layout)?;
        let loads: Vec<LoadContext> = self
            .trackers
            .iter_mut()
            .zip(&truth.forces)
            .map(|(tr, &f)| tr.observe(f.min(model.piezo.force_range), t, &model.piezo, crate::reborrow(&mut noise)))
            .collect();
        scan_array(truth, &loads, cfg, model, t, noise)
    }

    /// Load onset of each prexel, `None` where unloaded.
    pub fn onsets(&self) -> Vec<Option<f64>> {
        self.trackers.iter().map(LoadTracker::onset).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterMeasurement {
    pub counts: u32,
    pub saturated: bool,
}

/// Runs `n` charge cycles against the electrode capacitance implied by the
/// current ground truth, adding `round(t_half · f)` counts per cycle.
///
/// Noise jitters every cycle on its own, sized so the summed counter keeps
/// the configured standard deviation once the per-cycle rounding is added.
pub fn measure_counter(
    truth: &GroundTruthState,
    cfg: &DaqConfig,
    cap: &CapacitiveParams,
    noise: Option<&mut dyn RngCore>,
) -> CounterMeasurement {
    let loop_params = CapacitiveParams {
        n_cycles: cfg.n_cycles,
        series_resistance: cfg.series_resistor,
        ..cap.clone()
    };
    let target = counter_of_truth(truth, cap, None);
    let ceiling = cap.saturation_ceiling;
    let saturated = CounterMeasurement {
        counts: ceiling as u32,
        saturated: true,
    };
    if target.saturated {
        return saturated;
    }
    let c = crate::physics::capacitance_estimate(target.counts, &loop_params);
    let t_half = crate::physics::half_charge_time(cfg.series_resistor, c);
    let per_cycle = t_half * cap.increment_freq;
    let n = cfg.n_cycles as f64;
    let jitter = noise.and_then(|rng| {
        let var = (cap.base_sigma.powi(2) - n / 12.0).max(0.0) / n;
        Normal::new(0.0, var.sqrt()).ok().filter(|_| var > 0.0).map(|d| (rng, d))
    });
    let mut total = 0.0;
    match jitter {
        Some((rng, d)) => {
            for _ in 0..cfg.n_cycles {
                total += (per_cycle + d.sample(rng)).round().max(0.0);
                if total >= ceiling {
                    return saturated;
                }
            }
        }
        None => {
            total = n * per_cycle.round();
            if total >= ceiling {
                return saturated;
            }
        }
    }
    CounterMeasurement {
        counts: total as u32,
        saturated: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{counter_of, LoadDirection};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn idle_loads(n: usize) -> Vec<LoadContext> {
        vec![LoadContext::fresh(LoadDirection::Loading); n]
    }

    #[test]
    fn idle_scan_reads_base_resistance_everywhere() {
        let model = SensorModel::preset("64px").unwrap();
        let cfg = DaqConfig::default();
        let truth = GroundTruthState::empty(8, 8);
        let samples = scan_array(&truth, &idle_loads(64), &cfg, &model, 0.0, None).unwrap();
        let expected = adc_of_resistance(model.piezo.base_resistance, &cfg);
        assert_eq!(samples.len(), 64);
        assert!(samples.iter().all(|s| s.raw == expected));
    }

    #[test]
    fn single_loaded_prexel_stands_out() {
        let model = SensorModel::preset("64px").unwrap();
        let cfg = DaqConfig::default();
        let mut truth = GroundTruthState::empty(8, 8);
        truth.set_force(3, 5, 8.1);
        let samples = scan_array(&truth, &idle_loads(64), &cfg, &model, 0.0, None).unwrap();
        let base = adc_of_resistance(model.piezo.base_resistance, &cfg);
        let changed: Vec<_> = samples.iter().filter(|s| s.raw != base).collect();
        assert_eq!(changed.len(), 1);
        assert_eq!(changed[0].address, MuxAddress { row_sel: 3, col_sel: 5 });
    }

    #[test]
    fn strip_scan_order() {
        let model = SensorModel::preset("16px").unwrap();
        let truth = GroundTruthState::empty(2, 8);
        let samples = scan_array(&truth, &idle_loads(16), &DaqConfig::default(), &model, 1.0, None).unwrap();
        let addrs: Vec<(u8, u8)> = samples.iter().map(|s| (s.address.row_sel, s.address.col_sel)).collect();
        let expected: Vec<(u8, u8)> = (0..2).flat_map(|r| (0..8).map(move |c| (r, c))).collect();
        assert_eq!(addrs, expected);
        assert!(samples.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn layout_mismatch_is_an_error() {
        let model = SensorModel::preset("16px").unwrap();
        let truth = GroundTruthState::empty(8, 8);
        assert!(matches!(
            scan_array(&truth, &idle_loads(64), &DaqConfig::default(), &model, 0.0, None),
            Err(DaqError::LayoutMismatch { .. })
        ));
    }

    #[test]
    fn select_bits() {
        let a = MuxAddress { row_sel: 5, col_sel: 2 };
        assert_eq!(a.select_bits(), ([true, false, true], [false, true, false]));
    }

    #[test]
    fn counter_baseline_and_near_hand() {
        let cfg = DaqConfig::default();
        let cap = CapacitiveParams::patch_64();
        let idle = measure_counter(&GroundTruthState::empty(8, 8), &cfg, &cap, None);
        assert!((idle.counts as f64 - 1610.0).abs() <= 70.0);
        let near = measure_counter(&GroundTruthState::empty(8, 8).with_hand(10.0), &cfg, &cap, None);
        assert!((near.counts as f64 - 1932.0).abs() <= 70.0);
    }

    #[test]
    fn counter_is_reproducible() {
        let cfg = DaqConfig::default();
        let cap = CapacitiveParams::patch_64();
        let truth = GroundTruthState::empty(8, 8).with_hand(40.0);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| measure_counter(&truth, &cfg, &cap, Some(&mut rng)).counts).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn counter_tracks_distance_model() {
        let cfg = DaqConfig::default();
        let cap = CapacitiveParams::patch_64();
        for x in (10..=150).map(f64::from) {
            let truth = GroundTruthState::empty(8, 8).with_hand(x);
            let measured = measure_counter(&truth, &cfg, &cap, None).counts as f64;
            let model = counter_of(Some(x), &cap, None).counts;
            assert!((measured - model).abs() <= cfg.n_cycles as f64, "x={x}");
        }
    }

    #[test]
    fn counter_saturates() {
        let cfg = DaqConfig::default();
        let cap = CapacitiveParams::patch_64();
        let truth = GroundTruthState::empty(8, 8).with_hand(0.01);
        let m = measure_counter(&truth, &cfg, &cap, None);
        assert!(m.saturated);
        assert_eq!(m.counts, 65_535);
    }

    #[test]
    fn counter_noise_keeps_spread_and_mean() {
        let cap = CapacitiveParams::patch_64();
        let cfg = DaqConfig::default();
        let truth = GroundTruthState::empty(8, 8).with_hand(100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..20_000)
            .map(|_| measure_counter(&truth, &cfg, &cap, Some(&mut rng)).counts as f64)
            .collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((mean - 1642.2).abs() < 0.5, "{mean}");
        assert!((sd - 9.6).abs() < 0.3, "{sd}");
    }
}
