use super::frame::{Frame, FrameType, BROADCAST, COORDINATOR_ADDR};
use super::pan::PanRegistry;
use crate::Micros;

/// Coordinator beacon schedule: one beacon at every multiple of `interval`,
/// starting at time zero, with its own sequence counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeaconSchedule {
    interval: Micros,
    next_tick: u64,
    bsn: u8,
}

impl BeaconSchedule {
    pub fn new(interval: Micros) -> Self {
        assert!(interval > 0, "beacon interval must be positive");
        Self {
            interval,
            next_tick: 0,
            bsn: 0,
        }
    }

    pub fn interval(&self) -> Micros {
        self.interval
    }

    /// Time of the next beacon not yet emitted.
    pub fn next_due(&self) -> Micros {
        self.next_tick * self.interval
    }

    /// Emits the beacon for `now` if `now` is a tick that has not fired yet.
    pub fn beacon_tick(&mut self, pan: &PanRegistry, now: Micros) -> Option<Frame> {
        if now % self.interval != 0 || now / self.interval < self.next_tick {
            return None;
        }
        self.next_tick = now / self.interval + 1;
        let seq = self.bsn;
        self.bsn = self.bsn.wrapping_add(1);
        Some(Frame {
            frame_type: FrameType::Beacon,
            seq,
            pan_id: pan.pan_id(),
            dest: BROADCAST,
            src: COORDINATOR_ADDR,
            payload: (pan.member_count() as u16).to_le_bytes().to_vec(),
        })
    }
}
