//! Front-end serial hop (8N1 UART) as pure latency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::div_round_half_up;
use crate::Micros;

pub const MIN_BAUD: u32 = 2400;
pub const MAX_BAUD: u32 = 115_200;
pub const DEFAULT_BAUD: u32 = 115_200;
/// Start bit + 8 data bits + stop bit.
pub const BITS_PER_BYTE: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("BaudOutOfRange: {0} bps is outside {MIN_BAUD}..={MAX_BAUD}")]
pub struct BaudOutOfRange(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SerialLinkConfig {
    baud: u32,
}

impl SerialLinkConfig {
    pub fn new(baud: u32) -> Result<Self, BaudOutOfRange> {
        if (MIN_BAUD..=MAX_BAUD).contains(&baud) {
            Ok(Self { baud })
        } else {
            Err(BaudOutOfRange(baud))
        }
    }

    pub fn baud(&self) -> u32 {
        self.baud
    }
}

impl Default for SerialLinkConfig {
    fn default() -> Self {
        Self { baud: DEFAULT_BAUD }
    }
}

impl TryFrom<u32> for SerialLinkConfig {
    type Error = BaudOutOfRange;

    fn try_from(baud: u32) -> Result<Self, Self::Error> {
        Self::new(baud)
    }
}

impl From<SerialLinkConfig> for u32 {
    fn from(c: SerialLinkConfig) -> u32 {
        c.baud
    }
}

/// Time to shift one byte: exactly `10 / baud` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteTime {
    baud: u32,
}

impl ByteTime {
    /// Exact value as the fraction `numerator_us / baud` µs.
    pub fn as_fraction_us(&self) -> (u64, u64) {
        (BITS_PER_BYTE * 1_000_000, self.baud as u64)
    }

    pub fn as_nanos(&self) -> u64 {
        div_round_half_up(BITS_PER_BYTE * 1_000_000_000, self.baud as u64)
    }

    pub fn as_micros_f64(&self) -> f64 {
        (BITS_PER_BYTE * 1_000_000) as f64 / self.baud as f64
    }

    /// Delay for a `k`-byte transfer, computed exactly then rounded to whole µs.
    pub fn delay_for(&self, k: usize) -> Micros {
        div_round_half_up(k as u64 * BITS_PER_BYTE * 1_000_000, self.baud as u64)
    }
}

pub fn uart_byte_time(cfg: &SerialLinkConfig) -> ByteTime {
    ByteTime { baud: cfg.baud }
}

/// FIFO serial line: a transfer starts once the previous one has finished.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerialLink {
    byte_time: ByteTime,
    busy_until: Micros,
}

impl SerialLink {
    pub fn new(cfg: SerialLinkConfig) -> Self {
        Self {
            byte_time: uart_byte_time(&cfg),
            busy_until: 0,
        }
    }

    pub fn byte_time(&self) -> ByteTime {
        self.byte_time
    }

    /// Queues a `k`-byte transfer arriving at `now`; returns its completion time.
    pub fn transfer(&mut self, now: Micros, k: usize) -> Micros {
        let start = now.max(self.busy_until);
        self.busy_until = start + self.byte_time.delay_for(k);
        self.busy_until
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_times_at_range_ends() {
        let fast = uart_byte_time(&SerialLinkConfig::new(115_200).unwrap());
        assert_eq!(fast.as_fraction_us(), (10_000_000, 115_200));
        assert_eq!(fast.as_nanos(), 86_806);
        assert!((fast.as_micros_f64() - 86.806).abs() < 1e-3);

        let slow = uart_byte_time(&SerialLinkConfig::new(2400).unwrap());
        assert_eq!(slow.as_nanos(), 4_166_667);
        assert!((slow.as_micros_f64() - 4166.667).abs() < 1e-3);
    }

    #[test]
    fn out_of_range_rejected() {
        assert_eq!(SerialLinkConfig::new(1200), Err(BaudOutOfRange(1200)));
        assert_eq!(SerialLinkConfig::new(230_400), Err(BaudOutOfRange(230_400)));
        assert!(serde_json::from_str::<SerialLinkConfig>("9600").is_ok());
        assert!(serde_json::from_str::<SerialLinkConfig>("300").is_err());
    }

    #[test]
    fn delay_is_exact_then_rounded() {
        let bt = uart_byte_time(&SerialLinkConfig::new(115_200).unwrap());
        // 4 × 86.8055… = 347.22 µs
        assert_eq!(bt.delay_for(4), 347);
        let bt = uart_byte_time(&SerialLinkConfig::new(9600).unwrap());
        // 3 × 1041.666… = 3125 µs exactly
        assert_eq!(bt.delay_for(3), 3125);
    }

    #[test]
    fn link_is_fifo() {
        let mut link = SerialLink::new(SerialLinkConfig::new(2400).unwrap());
        let a = link.transfer(0, 1);
        let b = link.transfer(0, 1);
        assert_eq!(a, 4167);
        assert_eq!(b, a + 4167);
        assert_eq!(link.transfer(100_000, 2), 100_000 + 8333);
    }
}
