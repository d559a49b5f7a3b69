//! Simplified nonbeacon-enabled 802.15.4 MAC.

pub mod beacon;
pub mod config;
pub mod crc;
pub mod csma;
pub mod frame;
pub mod pan;

pub use beacon::BeaconSchedule;
pub use config::{MacConfig, MacConfigError, MacTiming};
pub use crc::crc16_itu;
pub use csma::{csma_ca_transmit, CcaVerdict, Csma, CsmaResult, CsmaRun};
pub use frame::{
    decode_frame, encode_frame, fcs_valid, Frame, FrameError, FrameType, BROADCAST, COORDINATOR_ADDR,
    MAX_NODE_ADDR, MAX_PAYLOAD_OCTETS,
};
pub use pan::{associate, AddressRequest, Membership, PanError, PanRegistry, MAX_END_DEVICES};

use serde::{Deserialize, Serialize};

/// Outcome of an acknowledged send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Delivery {
    Delivered,
    NoAck,
    ChannelAccessFailure,
}
