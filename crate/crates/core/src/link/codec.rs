//! Wire format.
//!
//! ```text
//! AA 55 | type | len | payload (len bytes, <= 64) | crc16 (BE)
//! ```
//!
//! The CRC covers `type`, `len` and the payload. Multi-byte integers are
//! big-endian.

use serde::{Deserialize, Serialize};

use super::crc::crc16_ccitt_false;
use super::LinkError;
use crate::vehicle::PumpCommand;

pub const SYNC: [u8; 2] = [0xAA, 0x55];
pub const MAX_PAYLOAD: usize = 64;
/// Sync, type and length.
pub const HEADER_LEN: usize = 4;
pub const CRC_LEN: usize = 2;
pub const TELEMETRY_IR_CHANNELS: usize = 9;

pub const TYPE_SET_MOTORS: u8 = 0x01;
pub const TYPE_PUMP: u8 = 0x02;
pub const TYPE_START_SEQUENCE: u8 = 0x03;
pub const TYPE_TELEMETRY: u8 = 0x04;

/// Telemetry flag bits.
pub mod flags {
    pub const PLUNGER_DEGRADED: u8 = 1 << 0;
    pub const PLUNGER_NO_SIGNAL: u8 = 1 << 1;
    pub const PUMP_RUNNING: u8 = 1 << 2;
    pub const AT_SURFACE: u8 = 1 << 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    /// Motor set-points in percent, `-100..=100`.
    SetMotors { left: i8, right: i8 },
    /// Run the pump in `mode` for `duration_ms`; `Off` stops it.
    Pump { mode: PumpCommand, duration_ms: u16 },
    StartSequence { seq_id: u8 },
    Telemetry {
        depth_mm: u16,
        /// Channel level scaled to `0..=255`.
        ir: [u8; TELEMETRY_IR_CHANNELS],
        fill_est_tenth_ml: u8,
        flags: u8,
    },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::SetMotors { .. } => TYPE_SET_MOTORS,
            Message::Pump { .. } => TYPE_PUMP,
            Message::StartSequence { .. } => TYPE_START_SEQUENCE,
            Message::Telemetry { .. } => TYPE_TELEMETRY,
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if let Message::SetMotors { left, right } = *self {
            for (field, value) in [("left", left), ("right", right)] {
                if !(-100..=100).contains(&value) {
                    return Err(LinkError::FieldOutOfRange { field, value: value as i64 });
                }
            }
        }
        Ok(())
    }

    fn payload(&self) -> Vec<u8> {
        match *self {
            Message::SetMotors { left, right } => vec![left as u8, right as u8],
            Message::Pump { mode, duration_ms } => {
                let d = duration_ms.to_be_bytes();
                vec![pump_mode_byte(mode), d[0], d[1]]
            }
            Message::StartSequence { seq_id } => vec![seq_id],
            Message::Telemetry { depth_mm, ir, fill_est_tenth_ml, flags } => {
                let mut p = Vec::with_capacity(13);
                p.extend_from_slice(&depth_mm.to_be_bytes());
                p.extend_from_slice(&ir);
                p.push(fill_est_tenth_ml);
                p.push(flags);
                p
            }
        }
    }
}

pub fn pump_mode_byte(mode: PumpCommand) -> u8 {
    match mode {
        PumpCommand::Off => 0,
        PumpCommand::Intake => 1,
        PumpCommand::Expel => 2,
    }
}

pub fn pump_mode_from_byte(b: u8) -> Option<PumpCommand> {
    match b {
        0 => Some(PumpCommand::Off),
        1 => Some(PumpCommand::Intake),
        2 => Some(PumpCommand::Expel),
        _ => None,
    }
}

/// Frames an arbitrary payload.
pub fn encode_frame(msg_type: u8, payload: &[u8]) -> Result<Vec<u8>, LinkError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(LinkError::PayloadTooLong { len: payload.len() });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend_from_slice(&SYNC);
    out.push(msg_type);
    out.push(payload.len() as u8);
    out.extend_from_slice(payload);
    let crc = crc16_ccitt_false(&out[2..]);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

pub fn encode(msg: &Message) -> Result<Vec<u8>, LinkError> {
    msg.validate()?;
    encode_frame(msg.msg_type(), &msg.payload())
}

fn parse_payload(msg_type: u8, p: &[u8]) -> Result<Message, LinkError> {
    let expect = match msg_type {
        TYPE_SET_MOTORS => 2,
        TYPE_PUMP => 3,
        TYPE_START_SEQUENCE => 1,
        TYPE_TELEMETRY => 4 + TELEMETRY_IR_CHANNELS,
        other => return Err(LinkError::UnknownType(other)),
    };
    if p.len() != expect {
        return Err(LinkError::BadLength { msg_type, len: p.len() });
    }
    let msg = match msg_type {
        TYPE_SET_MOTORS => Message::SetMotors { left: p[0] as i8, right: p[1] as i8 },
        TYPE_PUMP => Message::Pump {
            mode: pump_mode_from_byte(p[0])
                .ok_or(LinkError::FieldOutOfRange { field: "mode", value: p[0] as i64 })?,
            duration_ms: u16::from_be_bytes([p[1], p[2]]),
        },
        TYPE_START_SEQUENCE => Message::StartSequence { seq_id: p[0] },
        _ => {
            let mut ir = [0u8; TELEMETRY_IR_CHANNELS];
            ir.copy_from_slice(&p[2..2 + TELEMETRY_IR_CHANNELS]);
            Message::Telemetry {
                depth_mm: u16::from_be_bytes([p[0], p[1]]),
                ir,
                fill_est_tenth_ml: p[2 + TELEMETRY_IR_CHANNELS],
                flags: p[3 + TELEMETRY_IR_CHANNELS],
            }
        }
    };
    msg.validate()?;
    Ok(msg)
}

/// Incremental decoder that scans for sync, validates length and CRC, and
/// resynchronizes one byte past any frame that fails.
#[derive(Debug, Default, Clone)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes held back waiting for the rest of a frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Next decoded message or error. `None` means more input is needed.
    pub fn poll(&mut self) -> Option<Result<Message, LinkError>> {
        self.next_item(false)
    }

    /// Drains everything left, treating the buffer as final. An incomplete
    /// trailing frame is reported once as [`LinkError::Truncated`].
    pub fn finish(&mut self) -> Vec<Result<Message, LinkError>> {
        let mut out = Vec::new();
        while let Some(item) = self.next_item(true) {
            out.push(item);
        }
        out
    }

    fn next_item(&mut self, eof: bool) -> Option<Result<Message, LinkError>> {
        let mut truncated: Option<LinkError> = None;
        loop {
            let Some(start) = self.buf.windows(2).position(|w| w == SYNC) else {
                // Keep a dangling first sync byte for the next push.
                let keep = usize::from(!eof && self.buf.last() == Some(&SYNC[0]));
                let drop = self.buf.len() - keep;
                self.buf.drain(..drop);
                return truncated.map(Err);
            };
            self.buf.drain(..start);

            let available = self.buf.len();
            if available < HEADER_LEN {
                if !eof {
                    return None;
                }
                truncated.get_or_insert(LinkError::Truncated { needed: HEADER_LEN, available });
                self.buf.drain(..1);
                continue;
            }
            let msg_type = self.buf[2];
            let len = self.buf[3] as usize;
            if len > MAX_PAYLOAD {
                self.buf.drain(..1);
                return Some(Err(LinkError::BadLength { msg_type, len }));
            }
            let total = HEADER_LEN + len + CRC_LEN;
            if available < total {
                if !eof {
                    return None;
                }
                // Possibly a false sync inside garbage: keep scanning past it.
                truncated.get_or_insert(LinkError::Truncated { needed: total, available });
                self.buf.drain(..1);
                continue;
            }
            let body = &self.buf[2..HEADER_LEN + len];
            let computed = crc16_ccitt_false(body);
            let received = u16::from_be_bytes([self.buf[total - 2], self.buf[total - 1]]);
            if computed != received {
                self.buf.drain(..1);
                return Some(Err(LinkError::CrcMismatch { computed, received }));
            }
            let result = parse_payload(msg_type, &self.buf[HEADER_LEN..HEADER_LEN + len]);
            self.buf.drain(..total);
            return Some(result);
        }
    }
}

/// Decodes the first frame in `bytes`.
pub fn decode(bytes: &[u8]) -> Result<Message, LinkError> {
    let mut dec = FrameDecoder::new();
    dec.push(bytes);
    match dec.poll() {
        Some(item) => item,
        None => dec
            .finish()
            .into_iter()
            .next()
            .unwrap_or(Err(LinkError::Truncated { needed: HEADER_LEN + CRC_LEN, available: bytes.len() })),
    }
}

/// Decodes every frame in a complete byte stream, including errors for
/// frames that failed validation.
pub fn decode_all(bytes: &[u8]) -> Vec<Result<Message, LinkError>> {
    let mut dec = FrameDecoder::new();
    dec.push(bytes);
    let mut out = Vec::new();
    while let Some(item) = dec.poll() {
        out.push(item);
    }
    out.extend(dec.finish());
    out
}
