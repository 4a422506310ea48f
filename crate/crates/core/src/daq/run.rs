use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{measure_counter, DaqConfig, DaqError, FrameQueue, TactileScanner};
use crate::physics::{GroundTruthState, SensorModel};
use crate::wire::Frame;

/// Supplies the physical state seen by the sensor at simulated time `t`.
pub trait TruthSource {
    fn state_at(&mut self, t: f64) -> GroundTruthState;
}

impl<F: FnMut(f64) -> GroundTruthState> TruthSource for F {
    fn state_at(&mut self, t: f64) -> GroundTruthState {
        self(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedFrame {
    /// Simulated emission time, s.
    pub t: f64,
    pub frame: Frame,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub tactile: u64,
    pub proximity: u64,
    pub dropped: u64,
}

/// Paced emulator. Tactile and proximity events sit on their own grids
/// `k / rate`; when both fall on the same instant the tactile scan goes first.
pub struct Daq {
    model: SensorModel,
    cfg: DaqConfig,
    scanner: TactileScanner,
    rng: Option<ChaCha8Rng>,
    seq: u16,
    next_tactile: u64,
    next_proximity: u64,
}

impl Daq {
    /// `seed = None` disables every noise source.
    pub fn new(model: SensorModel, cfg: DaqConfig, seed: Option<u64>) -> Result<Self, DaqError> {
        model.validate()?;
        cfg.validate()?;
        Ok(Self {
            scanner: TactileScanner::new(&model.layout),
            model,
            cfg,
            rng: seed.map(ChaCha8Rng::seed_from_u64),
            seq: 0,
            next_tactile: 0,
            next_proximity: 0,
        })
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    pub fn config(&self) -> &DaqConfig {
        &self.cfg
    }

    /// Time of the next event.
    pub fn next_time(&self) -> f64 {
        let (t, _) = self.next_event();
        t
    }

    fn next_event(&self) -> (f64, bool) {
        let tt = self.next_tactile as f64 / self.cfg.tactile_rate;
        let tp = self.next_proximity as f64 / self.cfg.proximity_rate;
        // tactile first on ties
        if tt <= tp {
            (tt, true)
        } else {
            (tp, false)
        }
    }

    /// Produces the next frame on the shared timeline.
    pub fn step(&mut self, source: &mut dyn TruthSource) -> Result<TimedFrame, DaqError> {
        let (t, tactile) = self.next_event();
        let truth = source.state_at(t);
        let seq = self.seq;
        self.seq = self.seq.wrapping_add(1);
        let id = self.cfg.sensor_id;
        let noise = self.rng.as_mut().map(|r| r as &mut dyn RngCore);
        let frame = if tactile {
            self.next_tactile += 1;
            let samples = self.scanner.scan(&truth, &self.cfg, &self.model, t, noise)?;
            let layout = &self.model.layout;
            Frame::tactile(
                id,
                seq,
                layout.rows as u8,
                layout.cols as u8,
                samples.iter().map(|s| s.raw).collect(),
            )
        } else {
            self.next_proximity += 1;
            let m = measure_counter(&truth, &self.cfg, &self.model.capacitive, noise);
            Frame::proximity(id, seq, m.counts, m.saturated)
        };
        Ok(TimedFrame { t, frame })
    }

    /// All frames with emission time in `[now, until)`.
    pub fn run_until(&mut self, source: &mut dyn TruthSource, until: f64) -> Result<Vec<TimedFrame>, DaqError> {
        let mut out = Vec::new();
        while self.next_time() < until {
            out.push(self.step(source)?);
        }
        Ok(out)
    }

    /// Same as [`Daq::run_until`] but pushes into a bounded queue.
    pub fn run_into(
        &mut self,
        source: &mut dyn TruthSource,
        until: f64,
        queue: &FrameQueue,
    ) -> Result<RunStats, DaqError> {
        let mut stats = RunStats::default();
        while self.next_time() < until {
            let tf = self.step(source)?;
            if tf.frame.is_tactile() {
                stats.tactile += 1;
            } else {
                stats.proximity += 1;
            }
            if queue.push(tf) {
                stats.dropped += 1;
            }
        }
        Ok(stats)
    }

    /// Onset of the current load on each prexel.
    pub fn load_onsets(&self) -> Vec<Option<f64>> {
        self.scanner.onsets()
    }
}
