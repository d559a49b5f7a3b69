//! Unslotted CSMA-CA.
//!
//! [`Csma`] is the backoff state for one frame. The event engine drives it one
//! CCA at a time; [`csma_ca_transmit`] runs the same loop to completion against
//! a medium that does not change while the loop runs.

use serde::Serialize;

use super::config::{MacConfig, MacTiming};
use crate::phy::{Cca, Medium, SizeError, TxId};
use crate::rng::StreamRng;
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Csma {
    /// Number of busy CCAs so far (NB).
    pub backoffs: u8,
    /// Current backoff exponent (BE).
    pub exponent: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcaVerdict {
    Transmit,
    BackOffAgain,
    ChannelAccessFailure,
}

impl Csma {
    pub fn new(cfg: &MacConfig) -> Self {
        Self {
            backoffs: 0,
            exponent: cfg.min_be,
        }
    }

    /// Number of backoff periods to wait, uniform in `[0, 2^BE - 1]`.
    pub fn draw_periods(&self, rng: &mut StreamRng) -> u64 {
        rng.bits(self.exponent as u32)
    }

    pub fn on_cca(&mut self, cca: Cca, cfg: &MacConfig) -> CcaVerdict {
        match cca {
            Cca::Idle => CcaVerdict::Transmit,
            Cca::Busy => {
                self.backoffs += 1;
                self.exponent = (self.exponent + 1).min(cfg.max_be);
                if self.backoffs > cfg.max_csma_backoffs {
                    CcaVerdict::ChannelAccessFailure
                } else {
                    CcaVerdict::BackOffAgain
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CsmaResult {
    Sent,
    ChannelAccessFailure,
}

/// Trace of one completed channel-access run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsmaRun {
    pub result: CsmaResult,
    /// Backoff periods drawn before each CCA, in order.
    pub waits: Vec<u64>,
    pub cca_attempts: usize,
    /// Time of the last CCA; transmission starts here when `Sent`.
    pub finished_at: Micros,
    pub tx: Option<TxId>,
}

/// Runs the whole unslotted loop from `start`. On an idle CCA the PSDU is put
/// on `medium` immediately.
pub fn csma_ca_transmit(
    medium: &mut Medium,
    node: u16,
    psdu: Vec<u8>,
    start: Micros,
    cfg: &MacConfig,
    timing: &MacTiming,
    rng: &mut StreamRng,
) -> Result<CsmaRun, SizeError> {
    let mut state = Csma::new(cfg);
    let mut now = start;
    let mut waits = Vec::new();
    loop {
        let periods = state.draw_periods(rng);
        waits.push(periods);
        now += periods * timing.backoff_unit;
        match state.on_cca(medium.cca(now), cfg) {
            CcaVerdict::Transmit => {
                let id = medium.begin(node, now, psdu)?.id;
                return Ok(CsmaRun {
                    result: CsmaResult::Sent,
                    cca_attempts: waits.len(),
                    waits,
                    finished_at: now,
                    tx: Some(id),
                });
            }
            CcaVerdict::BackOffAgain => continue,
            CcaVerdict::ChannelAccessFailure => {
                return Ok(CsmaRun {
                    result: CsmaResult::ChannelAccessFailure,
                    cca_attempts: waits.len(),
                    waits,
                    finished_at: now,
                    tx: None,
                })
            }
        }
    }
}
