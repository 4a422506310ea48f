use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::RobotCommand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimRobotConfig {
    /// Delay between issuing a command and the arm acting on it, s.
    pub dead_time: f64,
    /// mm/s
    pub speed_cap: f64,
}

impl Default for SimRobotConfig {
    fn default() -> Self {
        Self {
            dead_time: 0.1,
            speed_cap: 100.0,
        }
    }
}

/// Point-mass end effector with actuation dead-time and a speed cap.
///
/// A safe-pose command, once active, moves straight to its target at the
/// cap and ignores velocity commands until it gets there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRobot {
    pub cfg: SimRobotConfig,
    t: f64,
    pose: [f64; 3],
    velocity: [f64; 3],
    safe_target: Option<[f64; 3]>,
    pending: VecDeque<(f64, RobotCommand)>,
    last_arrival: Option<f64>,
}

impl SimRobot {
    pub fn new(pose: [f64; 3], cfg: SimRobotConfig) -> Self {
        Self {
            cfg,
            t: 0.0,
            pose,
            velocity: [0.0; 3],
            safe_target: None,
            pending: VecDeque::new(),
            last_arrival: None,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn pose(&self) -> [f64; 3] {
        self.pose
    }

    /// Velocity the arm is executing now, mm/s.
    pub fn velocity(&self) -> [f64; 3] {
        self.velocity
    }

    pub fn moving_to_safe_pose(&self) -> bool {
        self.safe_target.is_some()
    }

    /// Time the last safe-pose move finished.
    pub fn last_arrival(&self) -> Option<f64> {
        self.last_arrival
    }

    /// Queues a command; it takes effect `dead_time` from now.
    pub fn command(&mut self, cmd: RobotCommand) {
        self.pending.push_back((self.t + self.cfg.dead_time, cmd));
    }

    pub fn advance(&mut self, dt: f64) -> [f64; 3] {
        let end = self.t + dt.max(0.0);
        while let Some(&(te, cmd)) = self.pending.front() {
            if te > end {
                break;
            }
            self.integrate(te - self.t);
            self.apply(cmd);
            self.pending.pop_front();
        }
        self.integrate(end - self.t);
        self.t = end;
        self.pose
    }

    fn apply(&mut self, cmd: RobotCommand) {
        match cmd {
            RobotCommand::Velocity { v } => {
                if self.safe_target.is_none() {
                    self.velocity = clamp(v, self.cfg.speed_cap);
                }
            }
            RobotCommand::SafePose { target } => {
                self.safe_target = Some(target);
                self.velocity = [0.0; 3];
            }
            RobotCommand::Hold => {
                if self.safe_target.is_none() {
                    self.velocity = [0.0; 3];
                }
            }
        }
    }

    fn integrate(&mut self, h: f64) {
        if h <= 0.0 {
            return;
        }
        if let Some(target) = self.safe_target {
            let d = [target[0] - self.pose[0], target[1] - self.pose[1], target[2] - self.pose[2]];
            let dist = norm(d);
            let reach = self.cfg.speed_cap * h;
            if dist <= reach {
                self.pose = target;
                self.safe_target = None;
                self.last_arrival = Some(self.t + dist / self.cfg.speed_cap);
            } else {
                for i in 0..3 {
                    self.pose[i] += d[i] / dist * reach;
                }
            }
        } else {
            for i in 0..3 {
                self.pose[i] += self.velocity[i] * h;
            }
        }
        self.t += h;
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn clamp(v: [f64; 3], cap: f64) -> [f64; 3] {
    let n = norm(v);
    if n > cap {
        [v[0] * cap / n, v[1] * cap / n, v[2] * cap / n]
    } else {
        v
    }
}

/// Stateless single step without dead-time: the command acts immediately.
pub fn simulated_robot_step(pose: [f64; 3], command: RobotCommand, dt: f64, cfg: &SimRobotConfig) -> [f64; 3] {
    let mut r = SimRobot::new(
        pose,
        SimRobotConfig {
            dead_time: 0.0,
            ..*cfg
        },
    );
    r.command(command);
    r.advance(dt)
}
