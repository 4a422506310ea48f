//! JSON messages on the service socket.
//!
//! Every outbound message carries `"v"` and a `"type"` tag. `seq` grows by one
//! per outbound message of a service; clients drop anything older than what
//! they have. A snapshot is sent on connect.
//!
//! Inbound:
//!
//! ```json
//! {"type": "press", "row": 0, "col": 3, "force": 5.0}
//! {"type": "hand", "distance": 40.0}
//! {"type": "hand"}
//! {"type": "mode", "mode": "hand_guide"}
//! {"type": "tare", "seconds": 1.0}
//! ```

use prexel_core::calibration::Proximity;
use prexel_core::pipeline::{ForceGrid, ProximityUpdate};
use prexel_core::robot::{FsmState, RobotCommand, TouchClass};
use prexel_core::session::Mode;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Live,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot {
        v: u32,
        seq: u64,
        /// Simulated time, s.
        t: f64,
        source: Source,
        mode: Mode,
        layout: Layout,
        grid: Option<ForceGrid>,
        proximity: Option<ProximityUpdate>,
        pose: [f64; 3],
        fsm: FsmState,
        /// Operator hand, mm; `None` when none is placed.
        hand: Option<f64>,
    },
    Frame {
        v: u32,
        seq: u64,
        t: f64,
        /// Wire frame exactly as captured, hex.
        bytes: String,
        grid: Option<ForceGrid>,
        proximity: Option<ProximityUpdate>,
        /// mm, when the proximity estimate resolves to a distance.
        distance: Option<f64>,
        pose: [f64; 3],
        fsm: FsmState,
        command: Option<RobotCommand>,
        touch: Option<TouchClass>,
    },
    Heartbeat {
        v: u32,
        seq: u64,
        t: f64,
    },
    Error {
        v: u32,
        message: String,
    },
}

impl ServerMessage {
    pub fn seq(&self) -> Option<u64> {
        match self {
            ServerMessage::Snapshot { seq, .. } | ServerMessage::Frame { seq, .. } | ServerMessage::Heartbeat { seq, .. } => {
                Some(*seq)
            }
            ServerMessage::Error { .. } => None,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            v: SCHEMA_VERSION,
            message: message.into(),
        }
    }
}

pub fn distance_of(p: &ProximityUpdate) -> Option<f64> {
    match p.estimate {
        Proximity::At { distance } => Some(distance),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientEvent {
    Press {
        row: usize,
        col: usize,
        /// N; 0 releases.
        force: f64,
    },
    Hand {
        /// mm; absent removes the hand.
        #[serde(default)]
        distance: Option<f64>,
    },
    Mode {
        mode: Mode,
    },
    Tare {
        #[serde(default)]
        seconds: Option<f64>,
    },
}

/// Parses one inbound text message. `"v"` is optional but must match when given.
pub fn parse_client(text: &str) -> Result<ClientEvent, String> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if let Some(obj) = value.as_object_mut() {
        if let Some(v) = obj.remove("v") {
            if v.as_u64() != Some(SCHEMA_VERSION as u64) {
                return Err(format!("unsupported schema version {v}"));
            }
        }
    }
    serde_json::from_value(value).map_err(|e| e.to_string())
}

pub fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn unhex(text: &str) -> Option<Vec<u8>> {
    if text.len() % 2 != 0 {
        return None;
    }
    (0..text.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(text.get(i..i + 2)?, 16).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inbound_examples_parse() {
        assert_eq!(
            parse_client(r#"{"type":"press","row":0,"col":3,"force":5.0}"#).unwrap(),
            ClientEvent::Press { row: 0, col: 3, force: 5.0 }
        );
        assert_eq!(
            parse_client(r#"{"v":1,"type":"hand","distance":40}"#).unwrap(),
            ClientEvent::Hand { distance: Some(40.0) }
        );
        assert_eq!(parse_client(r#"{"type":"hand"}"#).unwrap(), ClientEvent::Hand { distance: None });
        assert_eq!(
            parse_client(r#"{"type":"mode","mode":"hand_guide"}"#).unwrap(),
            ClientEvent::Mode { mode: Mode::HandGuide }
        );
        assert_eq!(parse_client(r#"{"type":"tare"}"#).unwrap(), ClientEvent::Tare { seconds: None });
    }

    #[test]
    fn inbound_rejects_bad_messages() {
        assert!(parse_client(r#"{"v":2,"type":"tare"}"#).is_err());
        assert!(parse_client(r#"{"type":"teleport"}"#).is_err());
        assert!(parse_client(r#"{"type":"press","row":0,"col":3}"#).is_err());
        assert!(parse_client("not json").is_err());
    }

    #[test]
    fn outbound_is_tagged_and_versioned() {
        let m = ServerMessage::Heartbeat { v: SCHEMA_VERSION, seq: 7, t: 1.5 };
        let j: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(j["type"], "heartbeat");
        assert_eq!(j["v"], 1);
        assert_eq!(j["seq"], 7);
        let back: ServerMessage = serde_json::from_value(j).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn hex_round_trip() {
        let b: Vec<u8> = (0..=255).collect();
        assert_eq!(unhex(&hex(&b)).unwrap(), b);
        assert!(unhex("abc").is_none());
        assert!(unhex("zz").is_none());
    }
}
