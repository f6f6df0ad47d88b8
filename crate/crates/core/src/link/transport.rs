//! Lossy, delayed frame delivery: an in-process virtual-time link and a UDP datagram link.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::frame::{
    decode_frame, encode_frame, DecodeError, EncodeError, Message, HEADER_LEN, MAX_PAYLOAD,
};

/// Drop probability plus uniform latency on `[latency_min_ms, latency_max_ms]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkModel {
    pub drop_probability: f64,
    pub latency_min_ms: f64,
    pub latency_max_ms: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            drop_probability: 0.0,
            latency_min_ms: 2.0,
            latency_max_ms: 8.0,
        }
    }
}

impl LinkModel {
    pub fn lossless() -> Self {
        Self {
            drop_probability: 0.0,
            latency_min_ms: 0.0,
            latency_max_ms: 0.0,
        }
    }

    pub fn with_drop(drop_probability: f64) -> Self {
        Self {
            drop_probability,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(format!(
                "drop_probability {} not in [0, 1]",
                self.drop_probability
            ));
        }
        if !(self.latency_min_ms >= 0.0
            && self.latency_max_ms >= self.latency_min_ms
            && self.latency_max_ms.is_finite())
        {
            return Err(format!(
                "latency range [{}, {}] ms invalid",
                self.latency_min_ms, self.latency_max_ms
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    Delivered { frame: Vec<u8>, latency_ms: f64 },
    Dropped,
}

impl Delivery {
    pub fn is_delivered(&self) -> bool {
        matches!(self, Delivery::Delivered { .. })
    }
}

/// Decides the fate of one frame. Consumes one uniform draw for the drop
/// decision and, if delivered, one for the latency.
pub fn transport_send<R: Rng + ?Sized>(frame: &[u8], link: &LinkModel, rng: &mut R) -> Delivery {
    if rng.gen::<f64>() < link.drop_probability {
        return Delivery::Dropped;
    }
    let latency_ms = if link.latency_max_ms > link.latency_min_ms {
        rng.gen_range(link.latency_min_ms..=link.latency_max_ms)
    } else {
        link.latency_min_ms
    };
    Delivery::Delivered {
        frame: frame.to_vec(),
        latency_ms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Base station to backpack.
    Uplink,
    /// Backpack to base station.
    Downlink,
}

#[derive(Debug, Clone)]
struct InFlight {
    deliver_at_ms: f64,
    order: u64,
    direction: Direction,
    frame: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
}

/// Virtual-time loopback link. Frames become visible to `poll` once the
/// caller's clock passes their delivery time; ordering is by delivery time, then send order.
#[derive(Debug, Clone)]
pub struct SimLink {
    model: LinkModel,
    rng: ChaCha8Rng,
    in_flight: Vec<InFlight>,
    next_order: u64,
    stats: LinkStats,
}

impl SimLink {
    pub fn new(model: LinkModel, rng: ChaCha8Rng) -> Self {
        Self {
            model,
            rng,
            in_flight: Vec::new(),
            next_order: 0,
            stats: LinkStats::default(),
        }
    }

    pub fn seeded(model: LinkModel, seed: u64) -> Self {
        Self::new(model, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn model(&self) -> &LinkModel {
        &self.model
    }

    pub fn set_model(&mut self, model: LinkModel) {
        self.model = model;
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    /// Returns false if the frame was dropped.
    pub fn send(&mut self, direction: Direction, frame: &[u8], now_ms: f64) -> bool {
        self.stats.sent += 1;
        match transport_send(frame, &self.model, &mut self.rng) {
            Delivery::Dropped => {
                self.stats.dropped += 1;
                false
            }
            Delivery::Delivered { frame, latency_ms } => {
                self.in_flight.push(InFlight {
                    deliver_at_ms: now_ms + latency_ms,
                    order: self.next_order,
                    direction,
                    frame,
                });
                self.next_order += 1;
                true
            }
        }
    }

    pub fn poll(&mut self, direction: Direction, now_ms: f64) -> Vec<Vec<u8>> {
        let mut ready: Vec<InFlight> = Vec::new();
        self.in_flight.retain(|f| {
            if f.direction == direction && f.deliver_at_ms <= now_ms {
                ready.push(f.clone());
                false
            } else {
                true
            }
        });
        ready.sort_by(|a, b| {
            a.deliver_at_ms
                .total_cmp(&b.deliver_at_ms)
                .then(a.order.cmp(&b.order))
        });
        self.stats.delivered += ready.len() as u64;
        ready.into_iter().map(|f| f.frame).collect()
    }

    pub fn pending(&self) -> usize {
        self.in_flight.len()
    }

    pub fn clear(&mut self) {
        self.in_flight.clear();
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// One frame per datagram, same byte layout as the in-process link.
pub struct UdpTransport {
    socket: UdpSocket,
}

impl UdpTransport {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        Ok(Self {
            socket: UdpSocket::bind(addr)?,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    pub fn send_to(&self, msg: &Message, peer: SocketAddr) -> Result<(), TransportError> {
        let bytes = encode_frame(msg)?;
        self.socket.send_to(&bytes, peer)?;
        Ok(())
    }

    /// Waits up to `timeout` for one datagram. `Ok(None)` on timeout.
    pub fn recv(&self, timeout: Duration) -> Result<Option<(Message, SocketAddr)>, TransportError> {
        self.socket.set_read_timeout(Some(timeout))?;
        let mut buf = [0u8; HEADER_LEN + MAX_PAYLOAD + 2 + 1];
        match self.socket.recv_from(&mut buf) {
            Ok((n, from)) => Ok(Some((decode_frame(&buf[..n])?, from))),
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::frame::Body;

    #[test]
    fn extreme_drop_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let never = LinkModel::with_drop(0.0);
        let always = LinkModel::with_drop(1.0);
        for _ in 0..1000 {
            assert!(transport_send(&[1], &never, &mut rng).is_delivered());
            assert_eq!(transport_send(&[1], &always, &mut rng), Delivery::Dropped);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let link = LinkModel::with_drop(0.3);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|_| transport_send(&[0xAB], &link, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn latency_within_bounds() {
        let link = LinkModel {
            drop_probability: 0.0,
            latency_min_ms: 3.0,
            latency_max_ms: 9.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let Delivery::Delivered { latency_ms, .. } = transport_send(&[], &link, &mut rng)
            else {
                panic!("dropped")
            };
            assert!((3.0..=9.0).contains(&latency_ms));
        }
    }

    #[test]
    fn sim_link_orders_by_delivery_time() {
        let mut link = SimLink::seeded(LinkModel::lossless(), 0);
        link.send(Direction::Uplink, &[1], 10.0);
        link.send(Direction::Uplink, &[2], 5.0);
        link.send(Direction::Downlink, &[3], 0.0);
        assert!(link.poll(Direction::Uplink, 4.0).is_empty());
        assert_eq!(link.poll(Direction::Uplink, 20.0), vec![vec![2], vec![1]]);
        assert_eq!(link.poll(Direction::Downlink, 20.0), vec![vec![3]]);
        assert_eq!(link.stats().delivered, 3);
    }

    #[test]
    fn validation() {
        assert!(LinkModel::with_drop(1.5).validate().is_err());
        assert!(LinkModel {
            drop_probability: 0.0,
            latency_min_ms: 5.0,
            latency_max_ms: 1.0
        }
        .validate()
        .is_err());
        assert!(LinkModel::default().validate().is_ok());
    }

    #[test]
    fn udp_loopback() {
        let a = UdpTransport::bind("127.0.0.1:0").unwrap();
        let b = UdpTransport::bind("127.0.0.1:0").unwrap();
        let msg = Message::new(42, Body::Ack);
        a.send_to(&msg, b.local_addr().unwrap()).unwrap();
        let (got, from) = b.recv(Duration::from_secs(2)).unwrap().expect("datagram");
        assert_eq!(got, msg);
        assert_eq!(from, a.local_addr().unwrap());
        assert!(b.recv(Duration::from_millis(20)).unwrap().is_none());
    }
}
