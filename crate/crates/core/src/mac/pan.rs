//! PAN membership: association, disassociation and the address-space cap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::frame::{COORDINATOR_ADDR, MAX_NODE_ADDR};
use crate::Micros;

/// End devices a PAN can hold; with the coordinator that makes 256 participants.
pub const MAX_END_DEVICES: usize = MAX_NODE_ADDR as usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PanError {
    #[error("CapacityExceeded: PAN already holds {MAX_END_DEVICES} end devices plus the coordinator")]
    CapacityExceeded,
    #[error("DuplicateAddress: short address {0} is already taken")]
    DuplicateAddress(u16),
    #[error("WrongPan: requester is on PAN {got:#06x}, this PAN is {expected:#06x}")]
    WrongPan { expected: u16, got: u16 },
    #[error("InvalidAddress: {0} is outside 1..=255")]
    InvalidAddress(u16),
}

impl PanError {
    pub fn name(&self) -> &'static str {
        match self {
            PanError::CapacityExceeded => "CapacityExceeded",
            PanError::DuplicateAddress(_) => "DuplicateAddress",
            PanError::WrongPan { .. } => "WrongPan",
            PanError::InvalidAddress(_) => "InvalidAddress",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AddressRequest {
    Auto,
    Fixed(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Membership {
    pub joined: Micros,
    pub last_seen: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanRegistry {
    pan_id: u16,
    members: BTreeMap<u16, Membership>,
}

impl PanRegistry {
    pub fn new(pan_id: u16) -> Self {
        Self {
            pan_id,
            members: BTreeMap::new(),
        }
    }

    pub fn pan_id(&self) -> u16 {
        self.pan_id
    }

    pub fn coordinator_addr(&self) -> u16 {
        COORDINATOR_ADDR
    }

    /// Joins a device, assigning the lowest free address for `Auto`.
    pub fn associate(
        &mut self,
        requester_pan: u16,
        request: AddressRequest,
        now: Micros,
    ) -> Result<u16, PanError> {
        if requester_pan != self.pan_id {
            return Err(PanError::WrongPan {
                expected: self.pan_id,
                got: requester_pan,
            });
        }
        let addr = match request {
            AddressRequest::Fixed(COORDINATOR_ADDR) => {
                return Err(PanError::DuplicateAddress(COORDINATOR_ADDR))
            }
            AddressRequest::Fixed(a) if a > MAX_NODE_ADDR => return Err(PanError::InvalidAddress(a)),
            AddressRequest::Fixed(a) if self.members.contains_key(&a) => {
                return Err(PanError::DuplicateAddress(a))
            }
            _ if self.members.len() >= MAX_END_DEVICES => return Err(PanError::CapacityExceeded),
            AddressRequest::Fixed(a) => a,
            AddressRequest::Auto => (1..=MAX_NODE_ADDR)
                .find(|a| !self.members.contains_key(a))
                .ok_or(PanError::CapacityExceeded)?,
        };
        self.members.insert(
            addr,
            Membership {
                joined: now,
                last_seen: now,
            },
        );
        Ok(addr)
    }

    pub fn disassociate(&mut self, addr: u16) -> bool {
        self.members.remove(&addr).is_some()
    }

    /// Member or coordinator.
    pub fn is_participant(&self, addr: u16) -> bool {
        addr == COORDINATOR_ADDR || self.members.contains_key(&addr)
    }

    pub fn is_member(&self, addr: u16) -> bool {
        self.members.contains_key(&addr)
    }

    pub fn member(&self, addr: u16) -> Option<&Membership> {
        self.members.get(&addr)
    }

    pub fn touch(&mut self, addr: u16, now: Micros) {
        if let Some(m) = self.members.get_mut(&addr) {
            m.last_seen = m.last_seen.max(now);
        }
    }

    pub fn members(&self) -> impl Iterator<Item = (u16, &Membership)> {
        self.members.iter().map(|(a, m)| (*a, m))
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    /// Members plus the coordinator.
    pub fn participants(&self) -> usize {
        self.members.len() + 1
    }
}

pub fn associate(
    pan: &mut PanRegistry,
    requester_pan: u16,
    requested: AddressRequest,
    now: Micros,
) -> Result<u16, PanError> {
    pan.associate(requester_pan, requested, now)
}
