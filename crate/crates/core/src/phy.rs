//! Simulated shared radio medium.
//!
//! One logical channel per simulation. Transmissions occupy the half-open
//! interval `[start, end)` in integer microseconds; any temporal overlap
//! corrupts every frame involved (no capture effect).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::StreamRng;
use crate::Micros;

/// Largest PSDU the PHY will carry, in octets.
pub const MAX_PSDU_OCTETS: usize = 127;

/// Preamble (4) + start-of-frame delimiter (1) + PHY header (1).
pub const DEFAULT_PHY_OVERHEAD_OCTETS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("SizeError: {len} octets exceeds the {max}-octet limit")]
pub struct SizeError {
    pub len: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum BandId {
    B868,
    B915,
    #[default]
    B2450,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modulation {
    Bpsk,
    Oqpsk,
}

/// One row of the supported band table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandConfig {
    pub band_id: BandId,
    pub freq_range_mhz: (f64, f64),
    pub chip_rate_kchips: u32,
    pub modulation: Modulation,
    pub bit_rate_kbps: u32,
    pub symbol_rate_sps: u32,
    pub symbol_alphabet: u32,
    pub phy_overhead_octets: u32,
}

pub const B868: BandConfig = BandConfig {
    band_id: BandId::B868,
    freq_range_mhz: (868.0, 868.6),
    chip_rate_kchips: 300,
    modulation: Modulation::Bpsk,
    bit_rate_kbps: 20,
    symbol_rate_sps: 20_000,
    symbol_alphabet: 2,
    phy_overhead_octets: DEFAULT_PHY_OVERHEAD_OCTETS,
};

pub const B915: BandConfig = BandConfig {
    band_id: BandId::B915,
    freq_range_mhz: (902.0, 928.0),
    chip_rate_kchips: 600,
    modulation: Modulation::Bpsk,
    bit_rate_kbps: 40,
    symbol_rate_sps: 40_000,
    symbol_alphabet: 2,
    phy_overhead_octets: DEFAULT_PHY_OVERHEAD_OCTETS,
};

pub const B2450: BandConfig = BandConfig {
    band_id: BandId::B2450,
    freq_range_mhz: (2400.0, 2483.5),
    chip_rate_kchips: 2000,
    modulation: Modulation::Oqpsk,
    bit_rate_kbps: 250,
    symbol_rate_sps: 62_500,
    symbol_alphabet: 16,
    phy_overhead_octets: DEFAULT_PHY_OVERHEAD_OCTETS,
};

/// The three shipped bands, in table order.
pub const BANDS: [BandConfig; 3] = [B868, B915, B2450];

impl BandId {
    pub fn config(self) -> BandConfig {
        match self {
            BandId::B868 => B868,
            BandId::B915 => B915,
            BandId::B2450 => B2450,
        }
    }
}

/// `num / den` rounded to the nearest integer, ties away from zero.
pub(crate) fn div_round_half_up(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

impl BandConfig {
    pub fn bits_per_symbol(&self) -> u32 {
        self.symbol_alphabet.trailing_zeros()
    }

    /// Duration of `symbols` symbol periods, rounded to whole µs.
    pub fn symbols_to_us(&self, symbols: u64) -> Micros {
        div_round_half_up(symbols * 1_000_000, self.symbol_rate_sps as u64)
    }

    /// On-air duration of a PSDU of `psdu_octets`, PHY overhead included.
    pub fn airtime(&self, psdu_octets: usize) -> Result<Micros, SizeError> {
        if psdu_octets > MAX_PSDU_OCTETS {
            return Err(SizeError {
                len: psdu_octets,
                max: MAX_PSDU_OCTETS,
            });
        }
        let octets = self.phy_overhead_octets as u64 + psdu_octets as u64;
        let symbols_num = octets * 8;
        let bits_per_symbol = self.bits_per_symbol() as u64;
        // µs = symbols / symbol_rate * 1e6, symbols = bits / bits_per_symbol.
        Ok(div_round_half_up(
            symbols_num * 1_000_000,
            bits_per_symbol * self.symbol_rate_sps as u64,
        ))
    }
}

/// Free-function form of [`BandConfig::airtime`].
pub fn airtime(psdu_octets: usize, band: &BandConfig) -> Result<Micros, SizeError> {
    band.airtime(psdu_octets)
}

pub type TxId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub id: TxId,
    pub tx_node: u16,
    pub start: Micros,
    pub end: Micros,
    pub psdu: Vec<u8>,
    pub band: BandId,
}

impl Transmission {
    pub fn overlaps(&self, other: &Transmission) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, t: Micros) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Cca {
    Idle,
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RxStatus {
    Ok,
    Collided,
    NoiseCorrupted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceptionOutcome {
    pub rx_node: u16,
    pub status: RxStatus,
    pub lqi: u8,
    pub psdu: Vec<u8>,
}

#[derive(Debug)]
struct Slot {
    tx: Transmission,
    resolved: bool,
}

/// The shared medium: the set of transmissions still relevant for carrier
/// sense or collision resolution.
#[derive(Debug)]
pub struct Medium {
    band: BandConfig,
    noise_rate: f64,
    slots: Vec<Slot>,
    next_id: TxId,
}

impl Medium {
    /// `noise_rate` is the per-octet corruption probability, clamped to `[0, 1]`.
    pub fn new(band: BandConfig, noise_rate: f64) -> Self {
        Self {
            band,
            noise_rate: noise_rate.clamp(0.0, 1.0),
            slots: Vec::new(),
            next_id: 1,
        }
    }

    pub fn band(&self) -> &BandConfig {
        &self.band
    }

    pub fn noise_rate(&self) -> f64 {
        self.noise_rate
    }

    /// Puts `psdu` on the air from `start`; the end time follows from airtime.
    pub fn begin(&mut self, tx_node: u16, start: Micros, psdu: Vec<u8>) -> Result<&Transmission, SizeError> {
        let end = start + self.band.airtime(psdu.len())?;
        let id = self.next_id;
        self.next_id += 1;
        self.slots.push(Slot {
            tx: Transmission {
                id,
                tx_node,
                start,
                end,
                psdu,
                band: self.band.band_id,
            },
            resolved: false,
        });
        Ok(&self.slots.last().expect("just pushed").tx)
    }

    pub fn get(&self, id: TxId) -> Option<&Transmission> {
        self.slots.iter().find(|s| s.tx.id == id).map(|s| &s.tx)
    }

    pub fn cca(&self, t: Micros) -> Cca {
        if self.slots.iter().any(|s| s.tx.contains(t)) {
            Cca::Busy
        } else {
            Cca::Idle
        }
    }

    pub fn concurrent(&self, t: Micros) -> usize {
        self.slots.iter().filter(|s| s.tx.contains(t)).count()
    }

    /// Energy level 0–255: zero on an idle medium, otherwise full scale less
    /// the noise attenuation per transmission, saturating at 255.
    pub fn energy_detect(&self, t: Micros) -> u8 {
        let n = self.concurrent(t) as u32;
        if n == 0 {
            return 0;
        }
        let attenuation = (255.0 * self.noise_rate).round() as u32;
        let per_tx = (255 - attenuation).max(1);
        (n * per_tx).min(255) as u8
    }

    /// Whether `id` overlaps any other transmission known to the medium.
    pub fn is_collided(&self, id: TxId) -> bool {
        let Some(me) = self.get(id) else {
            return false;
        };
        self.slots.iter().any(|s| s.tx.id != id && s.tx.overlaps(me))
    }

    /// LQI reported for frames that were not lost to a collision.
    pub fn clean_lqi(&self) -> u8 {
        (255.0 * (1.0 - self.noise_rate)).round() as u8
    }

    /// Resolves transmission `id` at its end time, yielding one outcome per
    /// listener in the order given. Noise draws come from each listener's own
    /// stream. Marks the transmission resolved and drops stale history.
    pub fn broadcast<'a, I>(&mut self, id: TxId, listeners: I) -> Vec<ReceptionOutcome>
    where
        I: IntoIterator<Item = (u16, &'a mut StreamRng)>,
    {
        let collided = self.is_collided(id);
        let (psdu, end) = match self.get(id) {
            Some(tx) => (tx.psdu.clone(), tx.end),
            None => return Vec::new(),
        };
        let lqi = self.clean_lqi();
        let mut out = Vec::new();
        for (rx_node, rng) in listeners {
            if collided {
                out.push(ReceptionOutcome {
                    rx_node,
                    status: RxStatus::Collided,
                    lqi: 0,
                    psdu: psdu.clone(),
                });
                continue;
            }
            let mut rx = psdu.clone();
            let mut flipped = false;
            if self.noise_rate > 0.0 {
                for octet in rx.iter_mut() {
                    if self.noise_rate >= 1.0 || rng.unit() < self.noise_rate {
                        *octet ^= 1 << rng.bits(3);
                        flipped = true;
                    }
                }
            }
            out.push(ReceptionOutcome {
                rx_node,
                status: if flipped {
                    RxStatus::NoiseCorrupted
                } else {
                    RxStatus::Ok
                },
                lqi,
                psdu: rx,
            });
        }
        if let Some(slot) = self.slots.iter_mut().find(|s| s.tx.id == id) {
            slot.resolved = true;
        }
        self.prune(end);
        out
    }

    /// Forgets resolved transmissions that can no longer affect carrier sense
    /// or any pending collision check at or after `now`.
    fn prune(&mut self, now: Micros) {
        let horizon = self
            .slots
            .iter()
            .filter(|s| !s.resolved)
            .map(|s| s.tx.start)
            .min()
            .unwrap_or(now)
            .min(now);
        self.slots.retain(|s| !(s.resolved && s.tx.end <= horizon));
    }
}
