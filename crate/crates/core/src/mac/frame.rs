//! MAC frame codec.
//!
//! Wire layout, all multi-octet fields little-endian:
//!
//! ```text
//! +---------+-----+--------+------+-----+---------+-----+
//! | fc (2)  | seq | pan(2) | dst  | src | payload | fcs |
//! |         | (1) |        | (2)  | (2) | 0..=116 | (2) |
//! +---------+-----+--------+------+-----+---------+-----+
//! ```
//!
//! The low three bits of the first frame-control octet carry the frame type;
//! the remaining frame-control bits are reserved, written as zero and ignored
//! on decode.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::crc::crc16_itu;
use crate::phy::MAX_PSDU_OCTETS;

pub const HEADER_OCTETS: usize = 9;
pub const FCS_OCTETS: usize = 2;
pub const MIN_FRAME_OCTETS: usize = HEADER_OCTETS + FCS_OCTETS;
pub const MAX_PAYLOAD_OCTETS: usize = MAX_PSDU_OCTETS - HEADER_OCTETS - FCS_OCTETS;

/// Destination address accepted by every node.
pub const BROADCAST: u16 = 0xFFFF;
/// The coordinator's fixed short address.
pub const COORDINATOR_ADDR: u16 = 0;
/// Largest short address a node may hold.
pub const MAX_NODE_ADDR: u16 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrameType {
    Beacon,
    Data,
    Ack,
    MacCommand,
}

impl FrameType {
    pub fn code(self) -> u8 {
        match self {
            FrameType::Beacon => 0,
            FrameType::Data => 1,
            FrameType::Ack => 2,
            FrameType::MacCommand => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => FrameType::Beacon,
            1 => FrameType::Data,
            2 => FrameType::Ack,
            3 => FrameType::MacCommand,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("TooShort: {0} octets, need at least {MIN_FRAME_OCTETS}")]
    TooShort(usize),
    #[error("SizeError: {0} octets exceeds the {MAX_PSDU_OCTETS}-octet frame limit")]
    TooLong(usize),
    #[error("SizeError: payload of {0} octets exceeds {MAX_PAYLOAD_OCTETS}")]
    PayloadTooLong(usize),
    #[error("FcsMismatch: computed {computed:#06x}, received {received:#06x}")]
    FcsMismatch { computed: u16, received: u16 },
    #[error("UnknownFrameType: {0}")]
    UnknownFrameType(u8),
    #[error("InvalidAddress: {0:#06x} is not a short node address")]
    InvalidAddress(u16),
    #[error("AckWithPayload: acknowledgments carry no payload")]
    AckWithPayload,
}

impl FrameError {
    /// Stable error name for API and log surfaces.
    pub fn name(&self) -> &'static str {
        match self {
            FrameError::TooShort(_) => "TooShort",
            FrameError::TooLong(_) | FrameError::PayloadTooLong(_) => "SizeError",
            FrameError::FcsMismatch { .. } => "FcsMismatch",
            FrameError::UnknownFrameType(_) => "UnknownFrameType",
            FrameError::InvalidAddress(_) => "InvalidAddress",
            FrameError::AckWithPayload => "AckWithPayload",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub frame_type: FrameType,
    pub seq: u8,
    pub pan_id: u16,
    pub dest: u16,
    pub src: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn data(seq: u8, pan_id: u16, dest: u16, src: u16, payload: Vec<u8>) -> Self {
        Self {
            frame_type: FrameType::Data,
            seq,
            pan_id,
            dest,
            src,
            payload,
        }
    }

    /// Acknowledgment for `acked`, sent by its destination back to its source.
    pub fn ack_for(acked: &Frame) -> Self {
        Self {
            frame_type: FrameType::Ack,
            seq: acked.seq,
            pan_id: acked.pan_id,
            dest: acked.src,
            src: acked.dest,
            payload: Vec::new(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        MIN_FRAME_OCTETS + self.payload.len()
    }

    fn header(&self) -> [u8; HEADER_OCTETS] {
        let pan = self.pan_id.to_le_bytes();
        let dst = self.dest.to_le_bytes();
        let src = self.src.to_le_bytes();
        [
            self.frame_type.code(),
            0,
            self.seq,
            pan[0],
            pan[1],
            dst[0],
            dst[1],
            src[0],
            src[1],
        ]
    }

    /// FCS this frame carries on the wire.
    pub fn fcs(&self) -> u16 {
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(&self.header());
        buf.extend_from_slice(&self.payload);
        crc16_itu(&buf)
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        if self.payload.len() > MAX_PAYLOAD_OCTETS {
            return Err(FrameError::PayloadTooLong(self.payload.len()));
        }
        if self.dest > MAX_NODE_ADDR && self.dest != BROADCAST {
            return Err(FrameError::InvalidAddress(self.dest));
        }
        if self.src > MAX_NODE_ADDR {
            return Err(FrameError::InvalidAddress(self.src));
        }
        if self.frame_type == FrameType::Ack && !self.payload.is_empty() {
            return Err(FrameError::AckWithPayload);
        }
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(&self.header());
        buf.extend_from_slice(&self.payload);
        let fcs = crc16_itu(&buf);
        buf.extend_from_slice(&fcs.to_le_bytes());
        Ok(buf)
    }

    pub fn decode(raw: &[u8]) -> Result<Frame, FrameError> {
        if raw.len() < MIN_FRAME_OCTETS {
            return Err(FrameError::TooShort(raw.len()));
        }
        if raw.len() > MAX_PSDU_OCTETS {
            return Err(FrameError::TooLong(raw.len()));
        }
        let (body, fcs) = raw.split_at(raw.len() - FCS_OCTETS);
        let received = u16::from_le_bytes([fcs[0], fcs[1]]);
        let computed = crc16_itu(body);
        if computed != received {
            return Err(FrameError::FcsMismatch { computed, received });
        }
        let code = body[0] & 0x07;
        let frame_type = FrameType::from_code(code).ok_or(FrameError::UnknownFrameType(code))?;
        Ok(Frame {
            frame_type,
            seq: body[2],
            pan_id: u16::from_le_bytes([body[3], body[4]]),
            dest: u16::from_le_bytes([body[5], body[6]]),
            src: u16::from_le_bytes([body[7], body[8]]),
            payload: body[HEADER_OCTETS..].to_vec(),
        })
    }
}

pub fn encode_frame(f: &Frame) -> Result<Vec<u8>, FrameError> {
    f.encode()
}

pub fn decode_frame(raw: &[u8]) -> Result<Frame, FrameError> {
    Frame::decode(raw)
}

/// Whether `raw` carries a valid trailing FCS, regardless of its contents.
pub fn fcs_valid(raw: &[u8]) -> bool {
    raw.len() >= FCS_OCTETS && crc16_itu(raw) == 0
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn frame_strategy() -> impl Strategy<Value = Frame> {
        (
            0u8..4,
            any::<u8>(),
            any::<u16>(),
            prop_oneof![0u16..=255, Just(BROADCAST)],
            0u16..=255,
            prop::collection::vec(any::<u8>(), 0..=MAX_PAYLOAD_OCTETS),
        )
            .prop_map(|(t, seq, pan_id, dest, src, payload)| {
                let frame_type = FrameType::from_code(t).unwrap();
                let payload = if frame_type == FrameType::Ack {
                    Vec::new()
                } else {
                    payload
                };
                Frame {
                    frame_type,
                    seq,
                    pan_id,
                    dest,
                    src,
                    payload,
                }
            })
    }

    #[test]
    fn ack_layout() {
        let data = Frame::data(7, 0x0001, 2, 0, vec![1, 2, 3]);
        let raw = Frame::ack_for(&data).encode().unwrap();
        assert_eq!(raw.len(), 11);
        assert_eq!(raw[2], 0x07);
        assert_eq!(raw[0], 2);
    }

    #[test]
    fn data_layout() {
        let f = Frame::data(1, 0xBEEF, 3, 0, vec![9; 5]);
        let raw = f.encode().unwrap();
        assert_eq!(raw.len(), 16);
        assert_eq!(&raw[..9], &[1, 0, 1, 0xEF, 0xBE, 3, 0, 0, 0]);
        assert_eq!(u16::from_le_bytes([raw[14], raw[15]]), f.fcs());
    }

    #[test]
    fn decode_errors() {
        assert_eq!(Frame::decode(&[0; 5]), Err(FrameError::TooShort(5)));
        let mut raw = Frame::data(0, 1, 1, 0, vec![]).encode().unwrap();
        raw[0] = 5;
        let fcs = crc16_itu(&raw[..9]).to_le_bytes();
        raw[9] = fcs[0];
        raw[10] = fcs[1];
        assert_eq!(Frame::decode(&raw), Err(FrameError::UnknownFrameType(5)));
        assert!(matches!(Frame::decode(&[0; 128]), Err(FrameError::TooLong(128))));
    }

    #[test]
    fn encode_rejects_bad_frames() {
        let mut f = Frame::data(0, 1, 1, 0, vec![0; MAX_PAYLOAD_OCTETS + 1]);
        assert_eq!(f.encode(), Err(FrameError::PayloadTooLong(117)));
        f.payload.truncate(MAX_PAYLOAD_OCTETS);
        assert_eq!(f.encode().unwrap().len(), 127);
        f.dest = 256;
        assert_eq!(f.encode(), Err(FrameError::InvalidAddress(256)));
        let mut ack = Frame::ack_for(&Frame::data(0, 1, 1, 0, vec![]));
        ack.payload.push(1);
        assert_eq!(ack.encode(), Err(FrameError::AckWithPayload));
    }

    #[test]
    fn every_single_bit_flip_is_detected() {
        let mut rng = StreamRng::new(11, 0);
        for total_len in MIN_FRAME_OCTETS..=32 {
            let payload: Vec<u8> = (0..total_len - MIN_FRAME_OCTETS).map(|_| rng.random()).collect();
            let raw = Frame::data(rng.random(), rng.random(), 4, 0, payload)
                .encode()
                .unwrap();
            for bit in 0..raw.len() * 8 {
                let mut bad = raw.clone();
                bad[bit / 8] ^= 1 << (bit % 8);
                assert!(
                    matches!(Frame::decode(&bad), Err(FrameError::FcsMismatch { .. })),
                    "len {total_len} bit {bit}"
                );
            }
        }
    }

    #[test]
    fn decode_is_total_on_random_input() {
        let mut rng = StreamRng::new(5, 5);
        let mut buf = [0u8; MAX_PSDU_OCTETS];
        for _ in 0..1_000_000 {
            let len = rng.random_range(0..=MAX_PSDU_OCTETS);
            rng.fill(&mut buf[..len]);
            let _ = Frame::decode(&buf[..len]);
        }
    }

    proptest! {
        #[test]
        fn round_trip(f in frame_strategy()) {
            let raw = f.encode().unwrap();
            prop_assert!(raw.len() <= MAX_PSDU_OCTETS);
            prop_assert!(fcs_valid(&raw));
            prop_assert_eq!(Frame::decode(&raw).unwrap(), f);
        }
    }
}
