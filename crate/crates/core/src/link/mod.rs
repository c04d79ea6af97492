//! Ground-station radio link: framed binary messages and a depth-attenuated
//! delivery model. The radio only works near the surface, so delivery
//! probability ramps linearly from full at `d0` to zero at `d1`.

mod codec;
mod crc;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Execution};

pub use codec::{
    decode, decode_all, encode, encode_frame, flags, pump_mode_byte, pump_mode_from_byte, FrameDecoder, Message,
    CRC_LEN, HEADER_LEN, MAX_PAYLOAD, SYNC, TELEMETRY_IR_CHANNELS, TYPE_PUMP, TYPE_SET_MOTORS,
    TYPE_START_SEQUENCE, TYPE_TELEMETRY,
};
pub use crc::crc16_ccitt_false;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("payload of {len} bytes exceeds the {MAX_PAYLOAD}-byte limit")]
    PayloadTooLong { len: usize },
    #[error("field {field} out of range: {value}")]
    FieldOutOfRange { field: &'static str, value: i64 },
    #[error("CRC mismatch: computed {computed:#06x}, frame carries {received:#06x}")]
    CrcMismatch { computed: u16, received: u16 },
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("payload length {len} invalid for message type {msg_type:#04x}")]
    BadLength { msg_type: u8, len: usize },
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Depth up to which frames get through at the base rate, m.
    pub d0: f64,
    /// Depth at and beyond which nothing gets through, m.
    pub d1: f64,
    pub base_loss: f64,
    /// s
    pub latency: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { d0: 0.3, d1: 1.2, base_loss: 0.01, latency: 0.05 }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.d0 >= 0.0 && self.d0 < self.d1 && self.d1.is_finite()) {
            return Err(format!("need 0 <= d0 < d1, got d0 = {}, d1 = {}", self.d0, self.d1));
        }
        if !(0.0..=1.0).contains(&self.base_loss) {
            return Err(format!("base_loss must be in [0, 1], got {}", self.base_loss));
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return Err(format!("latency must be >= 0, got {}", self.latency));
        }
        Ok(())
    }
}

pub fn delivery_probability(depth: f64, cfg: &ChannelConfig) -> f64 {
    let ramp = ((cfg.d1 - depth) / (cfg.d1 - cfg.d0)).clamp(0.0, 1.0);
    (1.0 - cfg.base_loss) * ramp
}

/// A frame that survived the channel, arriving `latency` after sending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivered {
    pub frame: Vec<u8>,
}

/// Draws whether `frame` survives at `vehicle_depth`.
pub fn deliver<R: Rng + ?Sized>(
    frame: &[u8],
    vehicle_depth: f64,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Option<Delivered> {
    let p = delivery_probability(vehicle_depth.max(0.0), cfg);
    (rng.random::<f64>() < p).then(|| Delivered { frame: frame.to_vec() })
}

/// Monte Carlo delivery rate. Trials are split into fixed-size chunks with
/// their own RNG streams, so the result depends only on `seed`.
pub fn empirical_delivery_rate(
    depth: f64,
    cfg: &ChannelConfig,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> f64 {
    const CHUNK: usize = 1024;
    let chunks = trials.div_ceil(CHUNK);
    let delivered: usize = exec::map_range(exec, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = CHUNK.min(trials - c * CHUNK);
        (0..n).filter(|_| deliver(&[], depth, cfg, &mut rng).is_some()).count()
    })
    .into_iter()
    .sum();
    delivered as f64 / trials.max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
struct InFlight {
    arrival: f64,
    seq: u64,
    frame: Vec<u8>,
}

impl Eq for InFlight {}

impl Ord for InFlight {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (arrival, seq).
        other.arrival.total_cmp(&self.arrival).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One direction of the radio link: frames in flight keyed by arrival time.
#[derive(Debug, Clone, Default)]
pub struct LinkQueue {
    cfg: ChannelConfig,
    in_flight: BinaryHeap<InFlight>,
    next_seq: u64,
}

impl LinkQueue {
    pub fn new(cfg: ChannelConfig) -> Self {
        Self { cfg, in_flight: BinaryHeap::new(), next_seq: 0 }
    }

    /// Sends `frame` at `now`; returns whether it will arrive.
    pub fn send<R: Rng + ?Sized>(&mut self, frame: &[u8], now: f64, vehicle_depth: f64, rng: &mut R) -> bool {
        match deliver(frame, vehicle_depth, &self.cfg, rng) {
            Some(d) => {
                self.in_flight.push(InFlight { arrival: now + self.cfg.latency, seq: self.next_seq, frame: d.frame });
                self.next_seq += 1;
                true
            }
            None => false,
        }
    }

    /// Frames whose arrival time is `<= now`, in arrival order.
    pub fn receive(&mut self, now: f64) -> Vec<(f64, Vec<u8>)> {
        let mut out = Vec::new();
        while self.in_flight.peek().is_some_and(|f| f.arrival <= now) {
            if let Some(f) = self.in_flight.pop() {
                out.push((f.arrival, f.frame));
            }
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }
}
