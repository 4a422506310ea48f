//! Declarative ground-truth scripts.
//!
//! ```toml
//! [[event]]
//! t = 1.0
//! kind = "press"
//! row = 0
//! col = 3
//! force = 5.0
//! ramp = 0.2          # seconds to reach the force, default 0
//!
//! [[event]]
//! t = 0.0
//! kind = "approach"   # or "retreat"
//! from = 300.0        # optional, default: where the hand is
//! to = 20.0
//! speed = 60.0        # mm/s
//! ```
//!
//! Other kinds: `release` (row, col, ramp), `hand` (distance, omitted for
//! no hand), `object` (object = "none" | "human_hand" | "non_detectable"),
//! `interference` (counts, duration).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::daq::TruthSource;
use crate::physics::{GroundTruthState, ObjectKind};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario: {0}")]
    Parse(String),
    #[error("event {index} at t = {t} s comes before the previous event")]
    OutOfOrder { index: usize, t: f64 },
    #[error("event {index}: prexel ({row}, {col}) outside the {rows}x{cols} layout")]
    OutOfLayout {
        index: usize,
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("event {index}: {msg}")]
    Invalid { index: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Press {
        row: usize,
        col: usize,
        force: f64,
        #[serde(default)]
        ramp: f64,
    },
    Release {
        row: usize,
        col: usize,
        #[serde(default)]
        ramp: f64,
    },
    Approach {
        #[serde(default)]
        from: Option<f64>,
        to: f64,
        speed: f64,
    },
    Retreat {
        #[serde(default)]
        from: Option<f64>,
        to: f64,
        speed: f64,
    },
    Hand {
        #[serde(default)]
        distance: Option<f64>,
    },
    Object {
        object: ObjectKind,
    },
    Interference {
        counts: f64,
        duration: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub t: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default, rename = "event")]
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn push(&mut self, t: f64, action: Action) -> &mut Self {
        self.events.push(ScenarioEvent { t, action });
        self
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<(), ScenarioError> {
        let mut last = f64::NEG_INFINITY;
        for (index, e) in self.events.iter().enumerate() {
            if !(e.t >= last) {
                return Err(ScenarioError::OutOfOrder { index, t: e.t });
            }
            last = e.t;
            let invalid = |msg: &str| Err(ScenarioError::Invalid {
                index,
                msg: msg.to_string(),
            });
            match &e.action {
                Action::Press { row, col, .. } | Action::Release { row, col, .. } if *row >= rows || *col >= cols => {
                    return Err(ScenarioError::OutOfLayout {
                        index,
                        row: *row,
                        col: *col,
                        rows,
                        cols,
                    });
                }
                Action::Press { force, ramp, .. } if !(*force >= 0.0) || !(*ramp >= 0.0) => {
                    return invalid("force and ramp must be non-negative");
                }
                Action::Release { ramp, .. } if !(*ramp >= 0.0) => return invalid("ramp must be non-negative"),
                Action::Approach { to, speed, from } | Action::Retreat { to, speed, from }
                    if !(*speed > 0.0) || !(*to > 0.0) || from.is_some_and(|f| !(f > 0.0)) =>
                {
                    return invalid("distances and speed must be positive");
                }
                Action::Hand { distance: Some(d) } if !(*d > 0.0) => return invalid("distance must be positive"),
                Action::Interference { duration, .. } if !(*duration >= 0.0) => {
                    return invalid("duration must be non-negative")
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Linear segment `(t0, v0) → (t1, v1)`, constant outside.
#[derive(Debug, Clone, Copy)]
struct Segment {
    t0: f64,
    v0: f64,
    t1: f64,
    v1: f64,
}

impl Segment {
    fn hold(v: f64) -> Self {
        Self {
            t0: 0.0,
            v0: v,
            t1: 0.0,
            v1: v,
        }
    }

    fn at(&self, t: f64) -> f64 {
        if t >= self.t1 {
            self.v1
        } else if t <= self.t0 {
            self.v0
        } else {
            self.v0 + (self.v1 - self.v0) * (t - self.t0) / (self.t1 - self.t0)
        }
    }

    fn to(&self, t: f64, target: f64, duration: f64) -> Self {
        Self {
            t0: t,
            v0: self.at(t),
            t1: t + duration,
            v1: target,
        }
    }
}

/// Evaluates a scenario as a function of time.
#[derive(Debug, Clone)]
pub struct ScenarioTruth {
    rows: usize,
    cols: usize,
    scenario: Scenario,
}

impl ScenarioTruth {
    pub fn new(scenario: Scenario, rows: usize, cols: usize) -> Result<Self, ScenarioError> {
        scenario.validate(rows, cols)?;
        Ok(Self { rows, cols, scenario })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Time of the last event, including ramps and moves.
    pub fn end_time(&self) -> f64 {
        self.scenario.events.iter().fold(0.0, |m, e| {
            let tail = match &e.action {
                Action::Press { ramp, .. } | Action::Release { ramp, .. } => *ramp,
                Action::Interference { duration, .. } => *duration,
                Action::Approach { from, to, speed } | Action::Retreat { from, to, speed } => {
                    from.map_or(0.0, |f| (f - to).abs() / speed)
                }
                _ => 0.0,
            };
            f64::max(m, e.t + tail)
        })
    }

    pub fn state(&self, t: f64) -> GroundTruthState {
        let mut s = GroundTruthState::empty(self.rows, self.cols);
        let mut forces = vec![Segment::hold(0.0); self.rows * self.cols];
        // NaN marks "no hand"
        let mut hand = Segment::hold(f64::NAN);
        let mut object = ObjectKind::None;
        for e in self.scenario.events.iter().take_while(|e| e.t <= t) {
            match &e.action {
                Action::Press { row, col, force, ramp } => {
                    let k = row * self.cols + col;
                    forces[k] = forces[k].to(e.t, *force, *ramp);
                }
                Action::Release { row, col, ramp } => {
                    let k = row * self.cols + col;
                    forces[k] = forces[k].to(e.t, 0.0, *ramp);
                }
                Action::Approach { from, to, speed } | Action::Retreat { from, to, speed } => {
                    let start = from.unwrap_or_else(|| hand.at(e.t));
                    let start = if start.is_nan() { *to } else { start };
                    hand = Segment {
                        t0: e.t,
                        v0: start,
                        t1: e.t + (start - to).abs() / speed,
                        v1: *to,
                    };
                    if object == ObjectKind::None {
                        object = ObjectKind::HumanHand;
                    }
                }
                Action::Hand { distance } => {
                    hand = Segment::hold(distance.unwrap_or(f64::NAN));
                    object = match (distance, object) {
                        (None, ObjectKind::HumanHand) => ObjectKind::None,
                        (Some(_), ObjectKind::None) => ObjectKind::HumanHand,
                        (_, o) => o,
                    };
                }
                Action::Object { object: o } => object = *o,
                Action::Interference { counts, duration } => {
                    if t < e.t + duration {
                        s.interference += counts;
                    }
                }
            }
        }
        for (f, seg) in s.forces.iter_mut().zip(&forces) {
            *f = seg.at(t).max(0.0);
        }
        let d = hand.at(t);
        s.hand_distance = (!d.is_nan()).then_some(d);
        s.object = object;
        s
    }
}

impl TruthSource for ScenarioTruth {
    fn state_at(&mut self, t: f64) -> GroundTruthState {
        self.state(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCRIPT: &str = r#"
        [[event]]
        t = 0.0
        kind = "approach"
        from = 300.0
        to = 60.0
        speed = 60.0

        [[event]]
        t = 1.0
        kind = "press"
        row = 0
        col = 3
        force = 5.0
        ramp = 0.5

        [[event]]
        t = 3.0
        kind = "release"
        row = 0
        col = 3

        [[event]]
        t = 3.0
        kind = "interference"
        counts = -40.0
        duration = 0.5
    "#;

    #[test]
    fn parses_and_evaluates() {
        let sc = Scenario::from_toml_str(SCRIPT).unwrap();
        assert_eq!(sc.events.len(), 4);
        let truth = ScenarioTruth::new(sc, 2, 8).unwrap();
        let s = truth.state(1.25);
        assert!((s.force(0, 3) - 2.5).abs() < 1e-12);
        assert!((s.hand_distance.unwrap() - 225.0).abs() < 1e-9);
        assert_eq!(s.object, ObjectKind::HumanHand);
        assert_eq!(truth.state(2.0).force(0, 3), 5.0);
        assert_eq!(truth.state(3.0).force(0, 3), 0.0);
        assert_eq!(truth.state(3.2).interference, -40.0);
        assert_eq!(truth.state(3.6).interference, 0.0);
        assert_eq!(truth.state(10.0).hand_distance, Some(60.0));
        assert!((truth.end_time() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_scenario_is_idle() {
        let truth = ScenarioTruth::new(Scenario::default(), 8, 8).unwrap();
        assert_eq!(truth.state(5.0), GroundTruthState::empty(8, 8));
    }

    #[test]
    fn rejects_bad_scripts() {
        let mut sc = Scenario::default();
        sc.push(2.0, Action::Hand { distance: Some(50.0) });
        sc.push(1.0, Action::Hand { distance: None });
        assert!(matches!(sc.validate(2, 8), Err(ScenarioError::OutOfOrder { index: 1, .. })));
        let mut sc = Scenario::default();
        sc.push(0.0, Action::Press { row: 2, col: 0, force: 1.0, ramp: 0.0 });
        assert!(matches!(sc.validate(2, 8), Err(ScenarioError::OutOfLayout { .. })));
        assert!(Scenario::from_toml_str("[[event]]\nt = 0\nkind = \"teleport\"").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let sc = Scenario::from_toml_str(SCRIPT).unwrap();
        assert_eq!(Scenario::from_toml_str(&sc.to_toml()).unwrap(), sc);
    }

    #[test]
    fn object_hides_hand() {
        let mut sc = Scenario::default();
        sc.push(0.0, Action::Object { object: ObjectKind::NonDetectable });
        sc.push(0.0, Action::Approach { from: Some(200.0), to: 5.0, speed: 50.0 });
        let truth = ScenarioTruth::new(sc, 8, 8).unwrap();
        assert_eq!(truth.state(1.0).object, ObjectKind::NonDetectable);
    }
}
