//! Closed-loop runs: simulated sensor, host pipeline, robot logic and the
//! point-model arm on one timeline.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{CalibrationError, ModelFile};
use crate::daq::{Daq, DaqConfig, DaqError, TimedFrame, TruthSource};
use crate::dsp::{DspError, TareConfig};
use crate::physics::{GroundTruthState, PhysicsError, SensorModel};
use crate::pipeline::{HostEvent, HostModels, HostPipeline};
use crate::robot::{
    classify_touch, column_forces, guidance_from_forces, update_avoidance, AvoidanceConfig, AvoidanceState,
    FsmState, GuidanceConfig, PrexelPoseMap, RobotCommand, SimRobot, SimRobotConfig, TouchClass, TouchConfig,
};
use crate::scenario::{Scenario, ScenarioError, ScenarioEvent, ScenarioTruth};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Daq(#[from] DaqError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    HandGuide,
    #[default]
    CollisionAvoid,
    Characterize,
}

/// Everything needed to reproduce a run.
///
/// ```toml
/// preset = "64px"
/// mode = "collision_avoid"
/// seed = 7
/// duration = 10.0
/// scenario = "approach.toml"   # or inline [[event]] tables
/// models = "models.json"       # optional fitted models
/// sensor = "sensor.toml"       # optional physics overrides
///
/// [daq]
/// tactile_rate = 100.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub preset: String,
    pub mode: Mode,
    /// `None` turns every noise source off.
    pub seed: Option<u64>,
    /// s; `None` means until the scenario ends.
    pub duration: Option<f64>,
    pub scenario: Option<PathBuf>,
    #[serde(rename = "event")]
    pub events: Vec<ScenarioEvent>,
    pub models: Option<PathBuf>,
    pub sensor: Option<PathBuf>,
    pub daq: DaqConfig,
    pub guidance: GuidanceConfig,
    pub avoidance: AvoidanceConfig,
    pub touch: TouchConfig,
    pub robot: SimRobotConfig,
    /// mm
    pub start_pose: [f64; 3],
    /// Direction in which moving the robot takes the sensor away from the hand.
    pub hand_axis: [f64; 3],
    /// Angle of column 0 on the flange, rad.
    pub wrap_theta0: f64,
    /// Keep every frame in the session log.
    pub record_frames: bool,
    /// Keep poses, commands and hand distances in the session log.
    pub record_trace: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            preset: "64px".into(),
            mode: Mode::default(),
            seed: Some(0),
            duration: None,
            scenario: None,
            events: Vec::new(),
            models: None,
            sensor: None,
            daq: DaqConfig::default(),
            guidance: GuidanceConfig::default(),
            avoidance: AvoidanceConfig::default(),
            touch: TouchConfig::default(),
            robot: SimRobotConfig::default(),
            start_pose: [0.0; 3],
            hand_axis: [0.0, 0.0, 1.0],
            wrap_theta0: 0.0,
            record_frames: true,
            record_trace: true,
        }
    }
}

impl SessionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SessionError> {
        toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))
    }

    /// Reads a config; relative file references resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SessionError::File {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.scenario, &mut cfg.models, &mut cfg.sensor].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn sensor_model(&self) -> Result<SensorModel, SessionError> {
        let model = match &self.sensor {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| SessionError::File {
                    path: p.clone(),
                    source,
                })?;
                let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| SessionError::Config(e.to_string()))?;
                table.entry("preset").or_insert_with(|| toml::Value::String(self.preset.clone()));
                SensorModel::from_toml_str(&table.to_string())?
            }
            None => SensorModel::preset(&self.preset)?,
        };
        Ok(model)
    }

    pub fn scenario(&self) -> Result<Scenario, SessionError> {
        match (&self.scenario, self.events.is_empty()) {
            (Some(_), false) => Err(SessionError::Config("give either a scenario file or inline events, not both".into())),
            (Some(p), true) => Ok(Scenario::load(p)?),
            (None, _) => Ok(Scenario {
                events: self.events.clone(),
            }),
        }
    }

    pub fn model_file(&self) -> Result<Option<ModelFile>, SessionError> {
        self.models.as_ref().map(|p| Ok(ModelFile::load(p)?)).transpose()
    }

    /// Host side exactly as a session built from this config sets it up.
    pub fn host_pipeline(&self, model: &SensorModel, file: Option<&ModelFile>) -> Result<HostPipeline, SessionError> {
        let mut host = HostPipeline::new(model, &self.daq)?;
        if let Some(f) = file {
            host.models = host.models.clone().with_file(f, host.filter());
        }
        Ok(host)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.daq.validate()?;
        let model = self.sensor_model()?;
        self.scenario()?.validate(model.layout.rows, model.layout.cols)?;
        self.model_file()?;
        if self.duration.is_some_and(|d| !(d > 0.0)) {
            return Err(SessionError::Config("duration must be positive".into()));
        }
        if norm(self.hand_axis) == 0.0 {
            return Err(SessionError::Config("hand_axis must be non-zero".into()));
        }
        Ok(())
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchRecord {
    pub t: f64,
    pub class: TouchClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub t: f64,
    pub command: RobotCommand,
}

/// What one frame did to the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub frame: TimedFrame,
    pub event: Option<HostEvent>,
    pub command: Option<RobotCommand>,
    pub pose: [f64; 3],
    pub fsm: FsmState,
    /// Hand distance the sensor actually saw, mm.
    pub hand_distance: Option<f64>,
    pub touch: Option<TouchClass>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub frames: Vec<TimedFrame>,
    pub commands: Vec<CommandRecord>,
    /// `(t, pose)` at every tactile tick.
    pub poses: Vec<(f64, [f64; 3])>,
    /// Times a safe-pose command was issued.
    pub triggers: Vec<f64>,
    pub touches: Vec<TouchRecord>,
    /// `(t, distance)` at every proximity tick.
    pub hand_distances: Vec<(f64, Option<f64>)>,
    pub tactile_frames: u64,
    pub proximity_frames: u64,
}

/// Operator inputs that take precedence over the script.
#[derive(Debug, Clone, Default, PartialEq)]
struct Overrides {
    forces: Vec<Option<f64>>,
    /// `Some(None)` means "no hand".
    hand: Option<Option<f64>>,
}

struct Sensed<'a> {
    truth: &'a ScenarioTruth,
    overrides: &'a Overrides,
    offset: f64,
    seen: Option<GroundTruthState>,
}

impl TruthSource for Sensed<'_> {
    fn state_at(&mut self, t: f64) -> GroundTruthState {
        let mut s = self.truth.state(t);
        for (f, o) in s.forces.iter_mut().zip(&self.overrides.forces) {
            if let Some(v) = o {
                *f = *v;
            }
        }
        if let Some(h) = self.overrides.hand {
            s = match h {
                Some(d) => s.with_hand(d),
                None => GroundTruthState {
                    hand_distance: None,
                    ..s
                },
            };
        }
        s.hand_distance = s.hand_distance.map(|d| (d + self.offset).max(0.0));
        self.seen = Some(s.clone());
        s
    }
}

pub struct Session {
    pub cfg: SessionConfig,
    daq: Daq,
    truth: ScenarioTruth,
    host: HostPipeline,
    robot: SimRobot,
    map: PrexelPoseMap,
    fsm: AvoidanceState,
    overrides: Overrides,
    touching: bool,
    /// Latest raw scans, for taring.
    recent: VecDeque<Vec<u16>>,
    log: SessionLog,
}

/// Scans kept for taring, s.
const TARE_HISTORY_S: f64 = 10.0;

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, SessionError> {
        let model = cfg.sensor_model()?;
        let scenario = cfg.scenario()?;
        let file = cfg.model_file()?;
        Self::build(cfg, model, scenario, file)
    }

    pub fn build(
        cfg: SessionConfig,
        model: SensorModel,
        scenario: Scenario,
        file: Option<ModelFile>,
    ) -> Result<Self, SessionError> {
        if norm(cfg.hand_axis) == 0.0 {
            return Err(SessionError::Config("hand_axis must be non-zero".into()));
        }
        let truth = ScenarioTruth::new(scenario, model.layout.rows, model.layout.cols)?;
        let host = cfg.host_pipeline(&model, file.as_ref())?;
        let map = PrexelPoseMap::cylindrical(&model.layout, cfg.wrap_theta0);
        let n = model.layout.len();
        let daq = Daq::new(model, cfg.daq.clone(), cfg.seed)?;
        Ok(Self {
            robot: SimRobot::new(cfg.start_pose, cfg.robot),
            daq,
            truth,
            host,
            map,
            fsm: AvoidanceState::default(),
            overrides: Overrides {
                forces: vec![None; n],
                hand: None,
            },
            touching: false,
            recent: VecDeque::new(),
            log: SessionLog::default(),
            cfg,
        })
    }

    pub fn model(&self) -> &SensorModel {
        self.daq.model()
    }

    pub fn host(&self) -> &HostPipeline {
        &self.host
    }

    pub fn host_models(&self) -> &HostModels {
        &self.host.models
    }

    pub fn robot(&self) -> &SimRobot {
        &self.robot
    }

    pub fn fsm(&self) -> AvoidanceState {
        self.fsm
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn next_time(&self) -> f64 {
        self.daq.next_time()
    }

    /// Duration from the config, or the end of the scenario plus two seconds.
    pub fn planned_duration(&self) -> f64 {
        self.cfg.duration.unwrap_or(self.truth.end_time() + 2.0)
    }

    pub fn set_mode(&mut self, mode: Mode) {
        if mode != self.cfg.mode {
            self.cfg.mode = mode;
            self.fsm = AvoidanceState::default();
            self.robot.command(RobotCommand::Hold);
        }
    }

    /// Operator press; a force of 0 hands the prexel back to the script.
    pub fn set_press(&mut self, row: usize, col: usize, force: f64) -> Result<(), SessionError> {
        let layout = &self.daq.model().layout;
        if row >= layout.rows || col >= layout.cols || !(force >= 0.0) {
            return Err(SessionError::Config(format!("no prexel ({row}, {col}) or bad force {force}")));
        }
        let k = layout.index(row, col);
        self.overrides.forces[k] = (force > 0.0).then_some(force.min(self.daq.model().piezo.force_range));
        Ok(())
    }

    /// Operator hand; `None` removes it.
    pub fn set_hand(&mut self, distance: Option<f64>) {
        self.overrides.hand = Some(distance.filter(|d| *d > 0.0));
    }

    /// Tares on the most recent scans with everything released.
    pub fn tare(&mut self, seconds: f64) -> Result<(), SessionError> {
        let n = (seconds * self.cfg.daq.tactile_rate).ceil() as usize;
        let skip = self.recent.len().saturating_sub(n);
        let scans: Vec<Vec<u16>> = self.recent.iter().skip(skip).cloned().collect();
        self.host.tare_from(&scans, &TareConfig::default())?;
        Ok(())
    }

    pub fn step(&mut self) -> Result<StepOutput, SessionError> {
        let t = self.daq.next_time();
        self.robot.advance(t - self.robot.time());
        let pose = self.robot.pose();
        let axis = self.cfg.hand_axis;
        let n = norm(axis);
        let offset = (0..3)
            .map(|i| (pose[i] - self.cfg.start_pose[i]) * axis[i] / n)
            .sum::<f64>();
        let mut sensed = Sensed {
            truth: &self.truth,
            overrides: &self.overrides,
            offset,
            seen: None,
        };
        let frame = self.daq.step(&mut sensed)?;
        let seen = sensed.seen.take();
        let hand_distance = seen.as_ref().and_then(|s| s.hand_distance);
        let event = self.host.on_frame(&frame.frame);
        if let crate::wire::Payload::Tactile { raw, .. } = &frame.frame.payload {
            let keep = (TARE_HISTORY_S * self.cfg.daq.tactile_rate).ceil() as usize;
            if self.recent.len() >= keep {
                self.recent.pop_front();
            }
            self.recent.push_back(raw.clone());
        }
        let mut command = None;
        let mut touch = None;
        match &event {
            Some(HostEvent::Tactile(grid)) => {
                self.log.tactile_frames += 1;
                let cols = column_forces(&grid.forces, grid.rows, grid.cols);
                let touching = cols.iter().any(|&f| f >= self.cfg.touch.touch_force);
                if touching && !self.touching {
                    let window = self.host.proximity_window();
                    let need = (self.cfg.touch.window_s * self.cfg.daq.proximity_rate).ceil() as usize;
                    let class = classify_touch(
                        &cols,
                        &window[window.len().saturating_sub(need)..],
                        self.cfg.daq.proximity_rate,
                        &self.host.models.proximity_filtered,
                        &self.cfg.touch,
                    );
                    self.log.touches.push(TouchRecord { t, class });
                    touch = Some(class);
                }
                self.touching = touching;
                if self.cfg.mode == Mode::HandGuide {
                    let g = guidance_from_forces(&grid.forces, &self.map, &self.cfg.guidance)
                        .map_err(|e| SessionError::Config(e.to_string()))?;
                    command = Some(RobotCommand::Velocity { v: g.velocity() });
                }
                if self.cfg.record_trace {
                    self.log.poses.push((t, pose));
                }
            }
            Some(HostEvent::Proximity(u)) => {
                self.log.proximity_frames += 1;
                if self.cfg.record_trace {
                    self.log.hand_distances.push((t, hand_distance));
                }
                if self.cfg.mode == Mode::CollisionAvoid {
                    let (s, cmd) = update_avoidance(u.estimate, self.fsm, &self.cfg.avoidance);
                    self.fsm = s;
                    if let Some(c) = cmd {
                        self.log.triggers.push(t);
                        command = Some(c);
                    }
                }
            }
            None => {}
        }
        if let Some(c) = command {
            self.robot.command(c);
            if self.cfg.record_trace {
                self.log.commands.push(CommandRecord { t, command: c });
            }
        }
        if self.cfg.record_frames {
            self.log.frames.push(frame.clone());
        }
        Ok(StepOutput {
            frame,
            event,
            command,
            pose,
            fsm: self.fsm.state,
            hand_distance,
            touch,
        })
    }

    pub fn run_until(&mut self, until: f64) -> Result<(), SessionError> {
        while self.daq.next_time() < until {
            self.step()?;
        }
        self.robot.advance(until - self.robot.time());
        Ok(())
    }
}
