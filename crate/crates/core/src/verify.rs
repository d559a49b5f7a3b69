//! Re-checks the invariants of a JSON-lines event log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::device::MonitorCategory;
use crate::log::{LogEntry, LogRecord, MacEvent, MacEventRecord};
use crate::mac::{Frame, FrameError, COORDINATOR_ADDR};
use crate::phy::TxId;
use crate::Micros;

/// The first invariant a log breaks. `record` is the 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub record: usize,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in record {}", self.message, self.record)
    }
}

impl std::error::Error for Violation {}

struct TxInfo {
    end: Micros,
    frame: Option<Frame>,
}

fn decode_hex(hex_str: &str) -> Result<Frame, FrameError> {
    match hex::decode(hex_str) {
        Ok(raw) => Frame::decode(&raw),
        Err(_) => Err(FrameError::TooShort(0)),
    }
}

fn fcs_ok(hex_str: &str) -> bool {
    hex::decode(hex_str).is_ok_and(|raw| crate::mac::fcs_valid(&raw))
}

/// Checks, in record order:
/// - timestamps never decrease and indices run 1, 2, 3, …;
/// - every TX `fcs_ok` claim and header match the embedded `frame_hex`;
/// - every RX refers to an earlier TX and happens at its end;
/// - monitor events: intrusions carry a valid frame dump, foreign-PAN events
///   really are foreign, traffic events are own-PAN, and each transmission
///   yields at most one per-frame event per monitor;
/// - device state changes only follow own-PAN frames from the coordinator.
pub fn verify_log(records: &[LogRecord]) -> Result<(), Violation> {
    let mut last_at = 0;
    let mut own_pan: Option<u16> = None;
    let mut txs: BTreeMap<TxId, TxInfo> = BTreeMap::new();
    let mut seen: BTreeSet<(u16, TxId)> = BTreeSet::new();

    // Time order first, so reordered lines report as such rather than as an
    // index gap.
    for (i, r) in records.iter().enumerate() {
        if r.at < last_at {
            return Err(Violation {
                record: i + 1,
                message: format!("non-monotonic timestamp ({} after {})", r.at, last_at),
            });
        }
        last_at = r.at;
    }
    for (i, r) in records.iter().enumerate() {
        let k = i + 1;
        let fail = |message: String| Err(Violation { record: k, message });
        if r.index != k as u64 {
            return fail(format!("index {} out of sequence", r.index));
        }
        match &r.entry {
            LogEntry::MacEvent(MacEventRecord {
                node: COORDINATOR_ADDR,
                event: MacEvent::PanStarted { pan_id },
            }) => own_pan = Some(*pan_id),
            LogEntry::MacEvent(_) | LogEntry::Stimulus(_) => {}
            LogEntry::Tx(tx) => {
                let valid = fcs_ok(&tx.frame_hex);
                let decoded = decode_hex(&tx.frame_hex);
                if tx.fcs_ok != decoded.is_ok() || (tx.fcs_ok && !valid) {
                    return fail("FCS mismatch".into());
                }
                if tx.octets * 2 != tx.frame_hex.len() {
                    return fail(format!("octet count {} disagrees with frame_hex", tx.octets));
                }
                if tx.end <= r.at {
                    return fail("transmission ends before it starts".into());
                }
                let header = decoded.as_ref().ok().map(crate::log::FrameHeader::from);
                if header != tx.frame {
                    return fail("TX header disagrees with frame_hex".into());
                }
                if txs
                    .insert(
                        tx.tx_id,
                        TxInfo {
                            end: tx.end,
                            frame: decoded.ok(),
                        },
                    )
                    .is_some()
                {
                    return fail(format!("duplicate tx_id {}", tx.tx_id));
                }
            }
            LogEntry::Rx(rx) => {
                let Some(tx) = txs.get(&rx.tx_id) else {
                    return fail(format!("RX for unknown tx_id {}", rx.tx_id));
                };
                if r.at != tx.end {
                    return fail(format!("RX at {} but TX {} ends at {}", r.at, rx.tx_id, tx.end));
                }
            }
            LogEntry::MonitorEvent(ev) => {
                if ev.at != r.at {
                    return fail("monitor event time disagrees with record time".into());
                }
                let c = ev.category;
                if !c.is_per_frame() {
                    continue;
                }
                if let Some(id) = ev.tx_id {
                    if !seen.insert((ev.monitor, id)) {
                        return fail(format!("second primary event for tx_id {id}"));
                    }
                }
                if c == MonitorCategory::FrameCorrupt {
                    continue;
                }
                let Some(hex_str) = &ev.frame_hex else {
                    if c.is_intrusion() {
                        return fail("intrusion event without frame_hex".into());
                    }
                    continue;
                };
                if !fcs_ok(hex_str) {
                    return fail("FCS mismatch".into());
                }
                let Ok(frame) = decode_hex(hex_str) else {
                    return fail("undecodable frame_hex".into());
                };
                let foreign = own_pan.is_some_and(|p| p != frame.pan_id);
                if c == MonitorCategory::IntrusionForeignPan && !foreign {
                    return fail("foreign-PAN event for an own-PAN frame".into());
                }
                if !c.is_intrusion() && foreign {
                    return fail("traffic event for a foreign-PAN frame".into());
                }
            }
            LogEntry::DeviceState(ds) => {
                let Some(tx) = txs.get(&ds.tx_id) else {
                    return fail(format!("state change caused by unknown tx_id {}", ds.tx_id));
                };
                let trusted = tx.frame.as_ref().is_some_and(|f| {
                    own_pan.map_or(true, |p| p == f.pan_id) && f.src == COORDINATOR_ADDR && f.dest == ds.node
                });
                if !trusted {
                    return fail("state change from an untrusted frame".into());
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Engine;
    use crate::scenario::load_scenario;

    fn sample_log() -> Vec<LogRecord> {
        let doc = r#"{"pan_id": 1, "duration_us": 2000000, "nodes": [
            {"role": "COORDINATOR"}, {"role": "ACTUATOR", "addr": 1}, {"role": "DISPLAY_MONITOR", "addr": 9}],
            "script": [{"at_us": 0, "typed_input": "*1*1*1#"}, {"at_us": 1000, "message": {"text": "Hi"}},
                       {"at_us": 5000, "inject_raw_frame": {"hex": "0100000100010000000201010100", "pan_id": 48879}}]}"#;
        Engine::new(load_scenario(doc).unwrap()).run().records
    }

    #[test]
    fn engine_output_passes() {
        let log = sample_log();
        assert!(log.len() > 20);
        verify_log(&log).unwrap();
    }

    #[test]
    fn swapped_lines_are_caught() {
        let mut log = sample_log();
        let i = log.iter().position(|r| r.at > 0).unwrap();
        log.swap(i - 1, i);
        let v = verify_log(&log).unwrap_err();
        assert!(v.message.contains("non-monotonic timestamp"), "{v}");
    }

    #[test]
    fn edited_frame_hex_is_caught() {
        let mut log = sample_log();
        let i = log
            .iter()
            .position(|r| matches!(&r.entry, LogEntry::Tx(t) if t.fcs_ok))
            .unwrap();
        if let LogEntry::Tx(t) = &mut log[i].entry {
            let mut raw = hex::decode(&t.frame_hex).unwrap();
            raw[9] ^= 0x01;
            t.frame_hex = hex::encode(raw);
        }
        let v = verify_log(&log).unwrap_err();
        assert_eq!(v.to_string(), format!("FCS mismatch in record {}", i + 1));
    }

    #[test]
    fn double_primary_event_is_caught() {
        let mut log = sample_log();
        let i = log
            .iter()
            .position(|r| matches!(&r.entry, LogEntry::MonitorEvent(e) if e.tx_id.is_some()))
            .unwrap();
        let mut dup = log[i].clone();
        dup.index += 1;
        log.insert(i + 1, dup);
        for (k, r) in log.iter_mut().enumerate() {
            r.index = k as u64 + 1;
        }
        let v = verify_log(&log).unwrap_err();
        assert!(v.message.contains("second primary event"), "{v}");
    }
}
