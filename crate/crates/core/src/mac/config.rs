use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::BandConfig;
use crate::Micros;

pub const BACKOFF_UNIT_SYMBOLS: u64 = 20;
pub const TURNAROUND_SYMBOLS: u64 = 12;
pub const DEFAULT_BEACON_INTERVAL_US: Micros = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid MAC configuration: {0}")]
pub struct MacConfigError(pub String);

/// CSMA-CA and retry parameters. Durations left as `None` derive from the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacConfig {
    pub min_be: u8,
    pub max_be: u8,
    pub max_csma_backoffs: u8,
    pub max_frame_retries: u8,
    pub ack_wait_us: Option<Micros>,
}

impl Default for MacConfig {
    fn default() -> Self {
        Self {
            min_be: 3,
            max_be: 5,
            max_csma_backoffs: 4,
            max_frame_retries: 3,
            ack_wait_us: None,
        }
    }
}

impl MacConfig {
    pub fn validate(&self) -> Result<(), MacConfigError> {
        if self.min_be > self.max_be || self.max_be > 8 {
            return Err(MacConfigError(format!(
                "need 0 <= min_be ({}) <= max_be ({}) <= 8",
                self.min_be, self.max_be
            )));
        }
        if self.ack_wait_us == Some(0) {
            return Err(MacConfigError("ack_wait_us must be positive".into()));
        }
        Ok(())
    }

    /// Resolves band-relative durations.
    pub fn timing(&self, band: &BandConfig) -> MacTiming {
        let backoff_unit = band.symbols_to_us(BACKOFF_UNIT_SYMBOLS);
        let turnaround = band.symbols_to_us(TURNAROUND_SYMBOLS);
        let ack_airtime = band.airtime(super::frame::MIN_FRAME_OCTETS).expect("ack fits");
        MacTiming {
            backoff_unit,
            turnaround,
            ack_wait: self
                .ack_wait_us
                .unwrap_or(turnaround + ack_airtime + backoff_unit),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MacTiming {
    pub backoff_unit: Micros,
    pub turnaround: Micros,
    /// Measured from the end of the data frame.
    pub ack_wait: Micros,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{B2450, B868};

    #[test]
    fn timing_2450() {
        let t = MacConfig::default().timing(&B2450);
        assert_eq!(t.backoff_unit, 320);
        assert_eq!(t.turnaround, 192);
        // 192 turnaround + 544 ack airtime + 320 slack
        assert_eq!(t.ack_wait, 1056);
    }

    #[test]
    fn timing_868() {
        let t = MacConfig::default().timing(&B868);
        assert_eq!(t.backoff_unit, 1000);
        assert_eq!(t.turnaround, 600);
    }

    #[test]
    fn validation() {
        assert!(MacConfig::default().validate().is_ok());
        let bad = MacConfig {
            min_be: 6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MacConfig {
            min_be: 3,
            max_be: 9,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
