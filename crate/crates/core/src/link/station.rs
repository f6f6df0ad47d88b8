//! Protocol endpoints: the base station (command sender with ack/retry) and
//! the backpack (command receiver, telemetry source).

use serde::{Deserialize, Serialize};

use super::frame::{
    decode_frame, encode_frame, Body, CommandPayload, DecodeError, EncodeError, Message,
    NackReason, TelemetryPayload,
};
use super::transport::{Direction, SimLink};
use crate::stim::StimulusCommand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub ack_timeout_ms: f64,
    pub max_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            ack_timeout_ms: 50.0,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StationEvent {
    Acked {
        seq: u16,
    },
    Rejected {
        seq: u16,
        reason: NackReason,
    },
    /// All retries exhausted without an ack.
    Failed {
        seq: u16,
    },
    Telemetry(TelemetryPayload),
    Corrupt(DecodeError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StationStats {
    pub commands: u64,
    pub retransmissions: u64,
    pub acked: u64,
    pub rejected: u64,
    pub failed: u64,
    pub corrupt: u64,
    pub telemetry: u64,
}

#[derive(Debug, Clone)]
struct Pending {
    seq: u16,
    frame: Vec<u8>,
    last_sent_ms: f64,
    retries: u32,
}

/// Sends one command at a time; a new command supersedes any unacknowledged one.
#[derive(Debug, Clone, Default)]
pub struct BaseStation {
    next_seq: u16,
    pending: Option<Pending>,
    policy: RetryPolicy,
    stats: StationStats,
}

impl BaseStation {
    pub fn new(policy: RetryPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    pub fn stats(&self) -> StationStats {
        self.stats
    }

    pub fn awaiting_ack(&self) -> Option<u16> {
        self.pending.as_ref().map(|p| p.seq)
    }

    pub fn send_command(
        &mut self,
        cmd: &StimulusCommand,
        link: &mut SimLink,
        now_ms: f64,
    ) -> Result<u16, EncodeError> {
        let payload = CommandPayload::from_stimulus(cmd).map_err(EncodeError::InvalidPayload)?;
        let seq = self.next_seq;
        let frame = encode_frame(&Message::new(seq, Body::Command(payload)))?;
        self.next_seq = self.next_seq.wrapping_add(1);
        link.send(Direction::Uplink, &frame, now_ms);
        self.stats.commands += 1;
        self.pending = Some(Pending {
            seq,
            frame,
            last_sent_ms: now_ms,
            retries: 0,
        });
        Ok(seq)
    }

    /// Drains downlink frames, then services the retransmission timer.
    pub fn poll(&mut self, link: &mut SimLink, now_ms: f64) -> Vec<StationEvent> {
        let mut events = Vec::new();
        for bytes in link.poll(Direction::Downlink, now_ms) {
            match decode_frame(&bytes) {
                Ok(msg) => match msg.body {
                    Body::Telemetry(t) => {
                        self.stats.telemetry += 1;
                        events.push(StationEvent::Telemetry(t));
                    }
                    Body::Ack | Body::Nack(_) => {
                        if self.pending.as_ref().is_some_and(|p| p.seq == msg.seq) {
                            self.pending = None;
                            if let Body::Nack(reason) = msg.body {
                                self.stats.rejected += 1;
                                events.push(StationEvent::Rejected {
                                    seq: msg.seq,
                                    reason,
                                });
                            } else {
                                self.stats.acked += 1;
                                events.push(StationEvent::Acked { seq: msg.seq });
                            }
                        }
                    }
                    Body::Command(_) => {}
                },
                Err(e) => {
                    self.stats.corrupt += 1;
                    events.push(StationEvent::Corrupt(e));
                }
            }
        }
        let mut failed = None;
        if let Some(p) = self.pending.as_mut() {
            if now_ms - p.last_sent_ms >= self.policy.ack_timeout_ms {
                if p.retries < self.policy.max_retries {
                    p.retries += 1;
                    p.last_sent_ms = now_ms;
                    self.stats.retransmissions += 1;
                    link.send(Direction::Uplink, &p.frame, now_ms);
                } else {
                    failed = Some(p.seq);
                }
            }
        }
        if let Some(seq) = failed {
            self.pending = None;
            self.stats.failed += 1;
            events.push(StationEvent::Failed { seq });
        }
        events
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackpackEvent {
    Applied {
        seq: u16,
        command: StimulusCommand,
    },
    Rejected {
        seq: u16,
        reason: NackReason,
    },
    /// Retransmitted command already handled; the stored reply was resent.
    Duplicate {
        seq: u16,
    },
    Corrupt(DecodeError),
}

/// Receiver side. Commands are applied at most once per sequence number.
#[derive(Debug, Clone, Default)]
pub struct Backpack {
    last: Option<(u16, Body)>,
    telemetry_seq: u16,
}

impl Backpack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn poll<F>(&mut self, link: &mut SimLink, now_ms: f64, mut apply: F) -> Vec<BackpackEvent>
    where
        F: FnMut(&StimulusCommand) -> Result<(), NackReason>,
    {
        let mut events = Vec::new();
        for bytes in link.poll(Direction::Uplink, now_ms) {
            let (seq, payload) = match decode_frame(&bytes) {
                Ok(Message {
                    seq,
                    body: Body::Command(c),
                }) => (seq, c),
                Ok(_) => continue,
                Err(e @ DecodeError::InvalidPayload(_)) => {
                    // CRC verified, so the header sequence number is trustworthy.
                    let seq = u16::from_be_bytes([bytes[3], bytes[4]]);
                    self.reply(link, now_ms, seq, Body::Nack(NackReason::Malformed));
                    events.push(BackpackEvent::Corrupt(e));
                    continue;
                }
                Err(e) => {
                    events.push(BackpackEvent::Corrupt(e));
                    continue;
                }
            };
            if let Some((last_seq, reply)) = self.last {
                if last_seq == seq {
                    self.reply(link, now_ms, seq, reply);
                    events.push(BackpackEvent::Duplicate { seq });
                    continue;
                }
            }
            let command = payload.to_stimulus();
            let reply = match apply(&command) {
                Ok(()) => {
                    events.push(BackpackEvent::Applied { seq, command });
                    Body::Ack
                }
                Err(reason) => {
                    events.push(BackpackEvent::Rejected { seq, reason });
                    Body::Nack(reason)
                }
            };
            self.last = Some((seq, reply));
            self.reply(link, now_ms, seq, reply);
        }
        events
    }

    fn reply(&self, link: &mut SimLink, now_ms: f64, seq: u16, body: Body) {
        if let Ok(frame) = encode_frame(&Message::new(seq, body)) {
            link.send(Direction::Downlink, &frame, now_ms);
        }
    }

    /// Fire-and-forget telemetry.
    pub fn send_telemetry(&mut self, payload: TelemetryPayload, link: &mut SimLink, now_ms: f64) {
        let seq = self.telemetry_seq;
        self.telemetry_seq = self.telemetry_seq.wrapping_add(1);
        if let Ok(frame) = encode_frame(&Message::new(seq, Body::Telemetry(payload))) {
            link.send(Direction::Downlink, &frame, now_ms);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::transport::LinkModel;
    use crate::stim::{Channel, ChannelSet};

    fn cerci() -> StimulusCommand {
        StimulusCommand::standard(ChannelSet::single(Channel::Cerci), 400)
    }

    #[test]
    fn ack_round_trip_on_clean_link() {
        let mut link = SimLink::seeded(LinkModel::lossless(), 1);
        let mut base = BaseStation::default();
        let mut pack = Backpack::new();
        let seq = base.send_command(&cerci(), &mut link, 0.0).unwrap();
        let mut applied = 0;
        let ev = pack.poll(&mut link, 0.0, |_| {
            applied += 1;
            Ok(())
        });
        assert_eq!(
            ev,
            vec![BackpackEvent::Applied {
                seq,
                command: cerci()
            }]
        );
        assert_eq!(base.poll(&mut link, 0.0), vec![StationEvent::Acked { seq }]);
        assert_eq!(applied, 1);
        assert_eq!(base.awaiting_ack(), None);
    }

    #[test]
    fn retries_then_fails_on_dead_link() {
        let mut link = SimLink::seeded(LinkModel::with_drop(1.0), 1);
        let mut base = BaseStation::default();
        let seq = base.send_command(&cerci(), &mut link, 0.0).unwrap();
        let mut events = Vec::new();
        for t in (10..=300).step_by(10) {
            events.extend(base.poll(&mut link, f64::from(t)));
        }
        assert_eq!(events, vec![StationEvent::Failed { seq }]);
        assert_eq!(base.stats().retransmissions, 3);
        assert_eq!(link.stats().sent, 4);
    }

    #[test]
    fn duplicate_delivery_applied_once() {
        let mut link = SimLink::seeded(LinkModel::lossless(), 1);
        let mut base = BaseStation::default();
        let mut pack = Backpack::new();
        base.send_command(&cerci(), &mut link, 0.0).unwrap();
        // Lose the ack: backpack replies but the base station never polls before the timeout.
        let mut count = 0;
        pack.poll(&mut link, 0.0, |_| {
            count += 1;
            Ok(())
        });
        link.poll(Direction::Downlink, 0.0);
        base.poll(&mut link, 60.0); // retransmits
        let ev = pack.poll(&mut link, 60.0, |_| {
            count += 1;
            Ok(())
        });
        assert!(matches!(ev[0], BackpackEvent::Duplicate { .. }));
        assert_eq!(count, 1);
        assert!(matches!(
            base.poll(&mut link, 60.0)[0],
            StationEvent::Acked { .. }
        ));
    }

    #[test]
    fn rejection_is_reported() {
        let mut link = SimLink::seeded(LinkModel::lossless(), 1);
        let mut base = BaseStation::default();
        let mut pack = Backpack::new();
        let seq = base.send_command(&cerci(), &mut link, 0.0).unwrap();
        pack.poll(&mut link, 0.0, |_| Err(NackReason::UnsupportedChannels));
        assert_eq!(
            base.poll(&mut link, 0.0),
            vec![StationEvent::Rejected {
                seq,
                reason: NackReason::UnsupportedChannels
            }]
        );
    }

    #[test]
    fn telemetry_reaches_base() {
        let mut link = SimLink::seeded(LinkModel::lossless(), 1);
        let mut base = BaseStation::default();
        let mut pack = Backpack::new();
        let t = TelemetryPayload::from_state(3, 1.0, 2.0, 45.0, 10.0, -5.0, 0);
        pack.send_telemetry(t, &mut link, 0.0);
        assert_eq!(base.poll(&mut link, 0.0), vec![StationEvent::Telemetry(t)]);
    }
}
