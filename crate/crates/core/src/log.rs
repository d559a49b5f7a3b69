//! JSON-lines event log records.
//!
//! Every record serializes as `{"index":..,"at":..,"kind":..,"body":{..}}`
//! with struct field order fixed by declaration, so the same run always yields
//! the same bytes. No floats and no hash maps appear in any record.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::command::Instruction;
use crate::device::{EndpointChange, MonitorEvent};
use crate::mac::{Delivery, Frame, FrameType};
use crate::phy::{RxStatus, TxId};
use crate::Micros;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    /// 1-based position in the log.
    pub index: u64,
    pub at: Micros,
    #[serde(flatten)]
    pub entry: LogEntry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LogEntry {
    Tx(TxRecord),
    Rx(RxRecord),
    MacEvent(MacEventRecord),
    MonitorEvent(MonitorEvent),
    DeviceState(DeviceStateRecord),
    Stimulus(StimulusRecord),
}

impl LogEntry {
    pub fn kind(&self) -> &'static str {
        match self {
            LogEntry::Tx(_) => "TX",
            LogEntry::Rx(_) => "RX",
            LogEntry::MacEvent(_) => "MAC_EVENT",
            LogEntry::MonitorEvent(_) => "MONITOR_EVENT",
            LogEntry::DeviceState(_) => "DEVICE_STATE",
            LogEntry::Stimulus(_) => "STIMULUS",
        }
    }
}

/// A transmission put on the medium; `at` is its start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub tx_id: TxId,
    pub node: u16,
    pub end: Micros,
    pub octets: usize,
    /// Header fields, when the PSDU parses as a frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameHeader>,
    pub fcs_ok: bool,
    pub injected: bool,
    pub frame_hex: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameHeader {
    pub frame_type: FrameType,
    pub seq: u8,
    pub pan_id: u16,
    pub dest: u16,
    pub src: u16,
}

impl From<&Frame> for FrameHeader {
    fn from(f: &Frame) -> Self {
        Self {
            frame_type: f.frame_type,
            seq: f.seq,
            pan_id: f.pan_id,
            dest: f.dest,
            src: f.src,
        }
    }
}

/// One listener's outcome; `at` equals the TX end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RxRecord {
    pub tx_id: TxId,
    pub node: u16,
    pub status: RxStatus,
    pub lqi: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacEventRecord {
    pub node: u16,
    pub event: MacEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MacEvent {
    /// The coordinator opened its PAN.
    PanStarted {
        pan_id: u16,
    },
    Associated {
        pan_id: u16,
        auto: bool,
    },
    /// A coordinator submission passed to the serial link.
    Submitted {
        submission: u64,
        seq: u8,
        dest: u16,
        payload_octets: usize,
        mac_at: Micros,
    },
    /// An unacknowledged frame left the radio.
    Sent {
        seq: u8,
        dest: u16,
    },
    ChannelAccessFailure {
        seq: u8,
        attempt: u8,
    },
    AckTimeout {
        seq: u8,
        attempt: u8,
    },
    /// Final result of a send.
    SendDone {
        seq: u8,
        dest: u16,
        result: Delivery,
        attempts: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        submission: Option<u64>,
    },
    Duplicate {
        src: u16,
        seq: u8,
    },
    /// A frame reached the node but was not acted on.
    Discarded {
        src: u16,
        seq: u8,
        reason: String,
    },
    /// The coordinator received a frame for the front end.
    Received {
        src: u16,
        seq: u8,
        summary: String,
    },
    NodeDropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceStateRecord {
    pub node: u16,
    #[serde(flatten)]
    pub change: EndpointChange,
    pub tx_id: TxId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StimulusSource {
    Typed,
    Message,
    Dtmf,
    Inject,
    DropNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusRecord {
    pub source: StimulusSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<Instruction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submission: Option<u64>,
    /// Typed error, `Name: message`, when the stimulus was rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LogRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log records always serialize")
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[LogRecord]) -> io::Result<()> {
    for r in records {
        w.write_all(r.to_json().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum ReadLogError {
    #[error("IoError: {0}")]
    Io(#[from] io::Error),
    #[error("ParseError: line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Parses a JSON-lines log; blank lines are not allowed.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<LogRecord>, ReadLogError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let rec = serde_json::from_str(&line).map_err(|e| ReadLogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{MonitorCategory, NodeRef};

    fn samples() -> Vec<LogRecord> {
        let entries = vec![
            LogEntry::MacEvent(MacEventRecord {
                node: 0,
                event: MacEvent::PanStarted { pan_id: 1 },
            }),
            LogEntry::Tx(TxRecord {
                tx_id: 1,
                node: 0,
                end: 672,
                octets: 15,
                frame: Some(FrameHeader {
                    frame_type: FrameType::Data,
                    seq: 0,
                    pan_id: 1,
                    dest: 1,
                    src: 0,
                }),
                fcs_ok: true,
                injected: false,
                frame_hex: "01000001000100000002010101e1a9".into(),
            }),
            LogEntry::Rx(RxRecord {
                tx_id: 1,
                node: 1,
                status: RxStatus::Ok,
                lqi: 255,
            }),
            LogEntry::DeviceState(DeviceStateRecord {
                node: 1,
                change: EndpointChange {
                    endpoint: 1,
                    previous: 0,
                    level: 255,
                },
                tx_id: 1,
            }),
            LogEntry::MonitorEvent(MonitorEvent {
                at: 672,
                monitor: 9,
                tx_id: Some(1),
                category: MonitorCategory::FrameCorrupt,
                src: NodeRef::Unknown,
                dest: NodeRef::Unknown,
                summary: "x".into(),
                frame_hex: Some("00".into()),
            }),
            LogEntry::Stimulus(StimulusRecord {
                source: StimulusSource::Typed,
                input: Some("*1*1*1#".into()),
                instruction: Some(Instruction::control(1, 1, crate::command::Action::On)),
                submission: Some(1),
                error: None,
            }),
        ];
        entries
            .into_iter()
            .enumerate()
            .map(|(i, entry)| LogRecord {
                index: i as u64 + 1,
                at: 0,
                entry,
            })
            .collect()
    }

    #[test]
    fn key_order_is_stable() {
        let r = &samples()[2];
        assert_eq!(
            r.to_json(),
            r#"{"index":3,"at":0,"kind":"RX","body":{"tx_id":1,"node":1,"status":"OK","lqi":255}}"#
        );
        let r = &samples()[0];
        assert_eq!(
            r.to_json(),
            r#"{"index":1,"at":0,"kind":"MAC_EVENT","body":{"node":0,"event":{"type":"PAN_STARTED","pan_id":1}}}"#
        );
    }

    #[test]
    fn jsonl_round_trip() {
        let recs = samples();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
        let mut again = Vec::new();
        write_jsonl(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn parse_error_names_line() {
        let text = format!("{}\nnot json\n", samples()[0].to_json());
        match read_jsonl(text.as_bytes()) {
            Err(ReadLogError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
