//! Frame layout (all multi-byte fields big-endian):
//!
//! ```text
//! +------+---------+----------+--------+-----------+--------+
//! | 0xA5 | version | msg_type | seq:16 | payload.. | crc:16 |
//! +------+---------+----------+--------+-----------+--------+
//! ```
//!
//! The CRC covers `version..payload`. Payload length is fixed per message type.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::crc::crc16;
use crate::sim::normalize_deg;
use crate::stim::{ChannelSet, StimulusCommand};

pub const SYNC: u8 = 0xA5;
pub const VERSION: u8 = 1;
pub const MAX_PAYLOAD: usize = 64;
pub const HEADER_LEN: usize = 5;
pub const CRC_LEN: usize = 2;

pub const COMMAND_LEN: usize = 7;
pub const TELEMETRY_LEN: usize = 19;
pub const ACK_LEN: usize = 0;
pub const NACK_LEN: usize = 1;

/// Largest amplitude a command may carry, matching a 5 V DAC around midscale.
pub const MAX_AMPLITUDE_MV: u16 = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Command = 0x01,
    Telemetry = 0x02,
    Ack = 0x03,
    Nack = 0x04,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(MsgType::Command),
            0x02 => Some(MsgType::Telemetry),
            0x03 => Some(MsgType::Ack),
            0x04 => Some(MsgType::Nack),
            _ => None,
        }
    }

    pub fn payload_len(self) -> usize {
        match self {
            MsgType::Command => COMMAND_LEN,
            MsgType::Telemetry => TELEMETRY_LEN,
            MsgType::Ack => ACK_LEN,
            MsgType::Nack => NACK_LEN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandPayload {
    pub channel_mask: u8,
    pub amplitude_mv: u16,
    pub pulse_width_ms: u16,
    pub duration_ms: u16,
}

impl CommandPayload {
    pub fn validate(&self) -> Result<(), String> {
        if self.channel_mask == 0 {
            return Err("empty channel mask".into());
        }
        if self.channel_mask & 0xF0 != 0 {
            return Err(format!(
                "channel mask {:#04x} sets reserved bits",
                self.channel_mask
            ));
        }
        if self.amplitude_mv == 0 || self.amplitude_mv > MAX_AMPLITUDE_MV {
            return Err(format!("amplitude {} mV out of range", self.amplitude_mv));
        }
        if self.pulse_width_ms == 0 {
            return Err("zero pulse width".into());
        }
        if u32::from(self.duration_ms) < 2 * u32::from(self.pulse_width_ms) {
            return Err("duration shorter than one biphasic pair".into());
        }
        Ok(())
    }

    pub fn from_stimulus(cmd: &StimulusCommand) -> Result<Self, String> {
        let amplitude_mv = (cmd.amplitude_v * 1000.0).round();
        if !(0.0..=f64::from(u16::MAX)).contains(&amplitude_mv) {
            return Err(format!("amplitude {} V not representable", cmd.amplitude_v));
        }
        let narrow =
            |v: u32, what: &str| u16::try_from(v).map_err(|_| format!("{what} {v} ms too long"));
        let payload = Self {
            channel_mask: cmd.channels.mask(),
            amplitude_mv: amplitude_mv as u16,
            pulse_width_ms: narrow(cmd.pulse_width_ms, "pulse width")?,
            duration_ms: narrow(cmd.duration_ms, "duration")?,
        };
        payload.validate()?;
        Ok(payload)
    }

    pub fn to_stimulus(&self) -> StimulusCommand {
        StimulusCommand::new(
            ChannelSet::from_mask(self.channel_mask),
            f64::from(self.amplitude_mv) / 1000.0,
            u32::from(self.pulse_width_ms),
            u32::from(self.duration_ms),
        )
    }
}

/// Fixed-point pose and velocity report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetryPayload {
    pub tick: u32,
    pub x_mm_x100: i32,
    pub y_mm_x100: i32,
    pub heading_deg_x100: i16,
    pub fwd_vel_mms_x10: i16,
    pub turn_vel_dps_x10: i16,
    pub nav_state: u8,
}

fn saturate_i32(v: f64) -> i32 {
    v.round().clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32
}

fn saturate_i16(v: f64) -> i16 {
    v.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

impl TelemetryPayload {
    pub fn from_state(
        tick: u32,
        x_mm: f64,
        y_mm: f64,
        heading_deg: f64,
        forward_mms: f64,
        turn_dps: f64,
        nav_state: u8,
    ) -> Self {
        let mut heading = saturate_i16(normalize_deg(heading_deg) * 100.0);
        if heading == -18000 {
            heading = 18000;
        }
        Self {
            tick,
            x_mm_x100: saturate_i32(x_mm * 100.0),
            y_mm_x100: saturate_i32(y_mm * 100.0),
            heading_deg_x100: heading,
            fwd_vel_mms_x10: saturate_i16(forward_mms * 10.0),
            turn_vel_dps_x10: saturate_i16(turn_dps * 10.0),
            nav_state,
        }
    }

    pub fn x_mm(&self) -> f64 {
        f64::from(self.x_mm_x100) / 100.0
    }

    pub fn y_mm(&self) -> f64 {
        f64::from(self.y_mm_x100) / 100.0
    }

    /// Heading in (−180, 180].
    pub fn heading_deg(&self) -> f64 {
        normalize_deg(f64::from(self.heading_deg_x100) / 100.0)
    }

    pub fn forward_mms(&self) -> f64 {
        f64::from(self.fwd_vel_mms_x10) / 10.0
    }

    pub fn turn_dps(&self) -> f64 {
        f64::from(self.turn_vel_dps_x10) / 10.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum NackReason {
    Malformed = 1,
    UnsupportedChannels = 2,
    InvalidParameters = 3,
}

impl NackReason {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(NackReason::Malformed),
            2 => Some(NackReason::UnsupportedChannels),
            3 => Some(NackReason::InvalidParameters),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Body {
    Command(CommandPayload),
    Telemetry(TelemetryPayload),
    /// Acknowledges the command carrying the same sequence number.
    Ack,
    Nack(NackReason),
}

impl Body {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Body::Command(_) => MsgType::Command,
            Body::Telemetry(_) => MsgType::Telemetry,
            Body::Ack => MsgType::Ack,
            Body::Nack(_) => MsgType::Nack,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u16,
    pub body: Body,
}

impl Message {
    pub fn new(seq: u16, body: Body) -> Self {
        Self { seq, body }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLarge(usize),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad sync byte {0:#04x}")]
    BadSync(u8),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("bad length: expected {expected} bytes, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("crc mismatch: frame carries {received:#06x}, computed {computed:#06x}")]
    BadCrc { received: u16, computed: u16 },
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
}

/// Low-level framing of an arbitrary payload.
pub fn encode_raw(msg_type: u8, seq: u16, payload: &[u8]) -> Result<Vec<u8>, EncodeError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(EncodeError::PayloadTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.push(SYNC);
    out.push(VERSION);
    out.push(msg_type);
    out.extend_from_slice(&seq.to_be_bytes());
    out.extend_from_slice(payload);
    let crc = crc16(&out[1..]);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

fn payload_bytes(body: &Body) -> Result<Vec<u8>, EncodeError> {
    let mut p = Vec::with_capacity(TELEMETRY_LEN);
    match body {
        Body::Command(c) => {
            c.validate().map_err(EncodeError::InvalidPayload)?;
            p.push(c.channel_mask);
            p.extend_from_slice(&c.amplitude_mv.to_be_bytes());
            p.extend_from_slice(&c.pulse_width_ms.to_be_bytes());
            p.extend_from_slice(&c.duration_ms.to_be_bytes());
        }
        Body::Telemetry(t) => {
            if !(-17999..=18000).contains(&t.heading_deg_x100) {
                return Err(EncodeError::InvalidPayload(format!(
                    "heading {} outside (-180, 180]",
                    f64::from(t.heading_deg_x100) / 100.0
                )));
            }
            p.extend_from_slice(&t.tick.to_be_bytes());
            p.extend_from_slice(&t.x_mm_x100.to_be_bytes());
            p.extend_from_slice(&t.y_mm_x100.to_be_bytes());
            p.extend_from_slice(&t.heading_deg_x100.to_be_bytes());
            p.extend_from_slice(&t.fwd_vel_mms_x10.to_be_bytes());
            p.extend_from_slice(&t.turn_vel_dps_x10.to_be_bytes());
            p.push(t.nav_state);
        }
        Body::Ack => {}
        Body::Nack(reason) => p.push(*reason as u8),
    }
    Ok(p)
}

pub fn encode_frame(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let payload = payload_bytes(&msg.body)?;
    encode_raw(msg.body.msg_type() as u8, msg.seq, &payload)
}

fn be_u16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be_i16(b: &[u8]) -> i16 {
    i16::from_be_bytes([b[0], b[1]])
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

fn be_i32(b: &[u8]) -> i32 {
    i32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

/// Decodes one frame. Never panics on arbitrary input.
pub fn decode_frame(bytes: &[u8]) -> Result<Message, DecodeError> {
    let min = HEADER_LEN + CRC_LEN;
    let Some(&sync) = bytes.first() else {
        return Err(DecodeError::BadLength {
            expected: min,
            actual: 0,
        });
    };
    if sync != SYNC {
        return Err(DecodeError::BadSync(sync));
    }
    if bytes.len() < 3 {
        return Err(DecodeError::BadLength {
            expected: min,
            actual: bytes.len(),
        });
    }
    if bytes[1] != VERSION {
        return Err(DecodeError::BadVersion(bytes[1]));
    }
    let msg_type = MsgType::from_byte(bytes[2]).ok_or(DecodeError::UnknownType(bytes[2]))?;
    let expected = min + msg_type.payload_len();
    if bytes.len() != expected {
        return Err(DecodeError::BadLength {
            expected,
            actual: bytes.len(),
        });
    }
    let crc_at = expected - CRC_LEN;
    let received = be_u16(&bytes[crc_at..]);
    let computed = crc16(&bytes[1..crc_at]);
    if received != computed {
        return Err(DecodeError::BadCrc { received, computed });
    }
    let seq = be_u16(&bytes[3..5]);
    let p = &bytes[HEADER_LEN..crc_at];
    let body = match msg_type {
        MsgType::Command => {
            let c = CommandPayload {
                channel_mask: p[0],
                amplitude_mv: be_u16(&p[1..3]),
                pulse_width_ms: be_u16(&p[3..5]),
                duration_ms: be_u16(&p[5..7]),
            };
            c.validate().map_err(DecodeError::InvalidPayload)?;
            Body::Command(c)
        }
        MsgType::Telemetry => {
            let t = TelemetryPayload {
                tick: be_u32(&p[0..4]),
                x_mm_x100: be_i32(&p[4..8]),
                y_mm_x100: be_i32(&p[8..12]),
                heading_deg_x100: be_i16(&p[12..14]),
                fwd_vel_mms_x10: be_i16(&p[14..16]),
                turn_vel_dps_x10: be_i16(&p[16..18]),
                nav_state: p[18],
            };
            if !(-17999..=18000).contains(&t.heading_deg_x100) {
                return Err(DecodeError::InvalidPayload("heading out of range".into()));
            }
            Body::Telemetry(t)
        }
        MsgType::Ack => Body::Ack,
        MsgType::Nack => Body::Nack(
            NackReason::from_byte(p[0])
                .ok_or_else(|| DecodeError::InvalidPayload(format!("nack reason {}", p[0])))?,
        ),
    };
    Ok(Message { seq, body })
}
