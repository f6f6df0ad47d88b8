//! Client socket schema, version 1.
//!
//! Every message is one JSON object in one WebSocket text frame and carries
//! `"v": 1` and a `"type"`: `hello`, `telemetry`, `event` or `error` from the
//! server, `command` from the client.
//!
//! ```json
//! {"v":1,"type":"command","kind":"left"}
//! {"v":1,"type":"command","kind":"set-target","x":800.0,"y":-150.0,"id":7}
//! ```

use serde::{Deserialize, Serialize};

use crate::nav::NavTarget;
use crate::scenario::Arena;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandKind {
    #[serde(rename = "left")]
    Left,
    #[serde(rename = "right")]
    Right,
    #[serde(rename = "cerci")]
    Cerci,
    #[serde(rename = "both-400")]
    Both400,
    #[serde(rename = "both-1200")]
    Both1200,
    #[serde(rename = "set-target")]
    SetTarget,
    #[serde(rename = "autopilot-on")]
    AutopilotOn,
    #[serde(rename = "autopilot-off")]
    AutopilotOff,
    #[serde(rename = "pause")]
    Pause,
    #[serde(rename = "resume")]
    Resume,
    #[serde(rename = "reset")]
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientCommand {
    pub v: u32,
    #[serde(rename = "type")]
    pub msg_type: MsgTag,
    pub kind: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    /// Echoed in the matching `accepted` event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
}

/// The only message type a client sends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgTag {
    Command,
}

impl ClientCommand {
    pub fn new(kind: CommandKind) -> Self {
        Self {
            v: SCHEMA_VERSION,
            msg_type: MsgTag::Command,
            kind,
            x: None,
            y: None,
            id: None,
        }
    }

    pub fn set_target(x: f64, y: f64) -> Self {
        Self {
            x: Some(x),
            y: Some(y),
            ..Self::new(CommandKind::SetTarget)
        }
    }
}

/// Machine-readable cause in an `error` reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnsupportedVersion,
    InvalidTarget,
    NoTarget,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Manual,
    Autopilot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// A command was taken off the queue.
    Accepted {
        kind: CommandKind,
        id: Option<u64>,
    },
    /// A stimulation command went out over the link.
    Stimulus {
        source: Source,
        channels: String,
        duration_ms: u32,
        seq: u16,
    },
    Acked {
        seq: u16,
    },
    Rejected {
        seq: u16,
        reason: String,
    },
    LinkFailure {
        seq: u16,
    },
    TargetSet {
        x: f64,
        y: f64,
    },
    Autopilot {
        on: bool,
    },
    Paused,
    Resumed,
    Reset {
        session: u32,
    },
    GoalReached {
        x: f64,
        y: f64,
    },
    Slit {
        terminal: String,
        elapsed_s: f64,
    },
    Heartbeat {
        tick: u32,
        paused: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        v: u32,
        session: u32,
        seed: u64,
        arena: Arena,
        start: NavTarget,
        target: Option<NavTarget>,
        autopilot: bool,
        paused: bool,
        time_scale: f64,
        telemetry_hz: f64,
    },
    Telemetry {
        v: u32,
        tick: u32,
        t_ms: f64,
        x: f64,
        y: f64,
        heading: f64,
        v_fwd: f64,
        omega: f64,
        nav_state: String,
    },
    Event {
        v: u32,
        t_ms: f64,
        #[serde(flatten)]
        event: Event,
    },
    Error {
        v: u32,
        code: ErrorCode,
        message: String,
    },
}

impl ServerMessage {
    pub fn event(t_ms: f64, event: Event) -> Self {
        ServerMessage::Event {
            v: SCHEMA_VERSION,
            t_ms,
            event,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            v: SCHEMA_VERSION,
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serialises")
    }
}

/// Parses one client frame; failures become the `error` reply to send back.
pub fn parse_client(text: &str) -> Result<ClientCommand, ServerMessage> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| ServerMessage::error(ErrorCode::Malformed, format!("invalid JSON: {e}")))?;
    match value.get("v").and_then(serde_json::Value::as_u64) {
        Some(1) => {}
        Some(v) => {
            return Err(ServerMessage::error(
                ErrorCode::UnsupportedVersion,
                format!("schema version {v} not supported; use 1"),
            ))
        }
        None => {
            return Err(ServerMessage::error(
                ErrorCode::Malformed,
                "missing numeric field `v`",
            ))
        }
    }
    serde_json::from_value(value)
        .map_err(|e| ServerMessage::error(ErrorCode::Malformed, e.to_string()))
}
