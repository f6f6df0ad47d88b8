//! Binary command/telemetry link between base station and backpack.

mod crc;
mod frame;
mod station;
mod transport;

pub use crc::crc16;
pub use frame::{
    decode_frame, encode_frame, encode_raw, Body, CommandPayload, DecodeError, EncodeError,
    Message, MsgType, NackReason, TelemetryPayload, COMMAND_LEN, CRC_LEN, HEADER_LEN, MAX_PAYLOAD,
    SYNC, TELEMETRY_LEN, VERSION,
};
pub use station::{Backpack, BackpackEvent, BaseStation, RetryPolicy, StationEvent, StationStats};
pub use transport::{
    transport_send, Delivery, Direction, LinkModel, LinkStats, SimLink, TransportError,
    UdpTransport,
};
