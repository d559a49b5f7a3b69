//! Node roles: coordinator, actuator and display/monitor.
//!
//! The handlers here are pure state transitions over a [`NodeState`]; the
//! engine decides which frames reach them.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::command::{decode_payload, Action, InstructionBody};
use crate::mac::{Frame, FrameType, PanRegistry, BROADCAST, COORDINATOR_ADDR};
use crate::phy::TxId;
use crate::Micros;

pub const DEFAULT_DISPLAY_CAPACITY: usize = 100;
pub const DEFAULT_ENDPOINTS: [u8; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Coordinator,
    Actuator,
    DisplayMonitor,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStats {
    pub malformed: u64,
    pub discarded: u64,
    pub duplicates: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub addr: u16,
    pub role: Role,
    pub associated: bool,
    pub online: bool,
    /// Actuator endpoint levels.
    pub endpoints: BTreeMap<u8, u8>,
    /// Display only; oldest first.
    pub display_buffer: VecDeque<String>,
    /// Monitor only: last time each source was heard.
    pub last_seen: BTreeMap<u16, Micros>,
    pub stats: NodeStats,
    #[serde(skip)]
    display_capacity: usize,
    #[serde(skip)]
    last_flagged: BTreeMap<u16, Micros>,
}

impl NodeState {
    pub fn new(addr: u16, role: Role) -> Self {
        Self {
            addr,
            role,
            associated: false,
            online: true,
            endpoints: BTreeMap::new(),
            display_buffer: VecDeque::new(),
            last_seen: BTreeMap::new(),
            stats: NodeStats::default(),
            display_capacity: DEFAULT_DISPLAY_CAPACITY,
            last_flagged: BTreeMap::new(),
        }
    }

    pub fn coordinator() -> Self {
        let mut n = Self::new(COORDINATOR_ADDR, Role::Coordinator);
        n.associated = true;
        n
    }

    pub fn actuator(addr: u16, endpoints: &[u8]) -> Self {
        let mut n = Self::new(addr, Role::Actuator);
        n.endpoints = endpoints.iter().map(|e| (*e, 0)).collect();
        n
    }

    pub fn display(addr: u16, capacity: usize) -> Self {
        let mut n = Self::new(addr, Role::DisplayMonitor);
        n.display_capacity = capacity.max(1);
        n
    }

    pub fn push_text(&mut self, text: String) {
        while self.display_buffer.len() >= self.display_capacity {
            self.display_buffer.pop_front();
        }
        self.display_buffer.push_back(text);
    }
}

/// A short address, or `"UNKNOWN"` when the frame could not be parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRef {
    Addr(u16),
    Unknown,
}

impl Serialize for NodeRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            NodeRef::Addr(a) => s.serialize_u16(*a),
            NodeRef::Unknown => s.serialize_str("UNKNOWN"),
        }
    }
}

impl<'de> Deserialize<'de> for NodeRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Addr(u16),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Addr(a) => Ok(NodeRef::Addr(a)),
            Repr::Tag(t) if t == "UNKNOWN" => Ok(NodeRef::Unknown),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!("bad node reference {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MonitorCategory {
    TextShown,
    CommandSeen,
    Delivery,
    BeaconSeen,
    IntrusionForeignPan,
    IntrusionUnknownSource,
    FrameCorrupt,
    NodeSilent,
}

impl MonitorCategory {
    pub fn is_intrusion(self) -> bool {
        matches!(
            self,
            MonitorCategory::IntrusionForeignPan | MonitorCategory::IntrusionUnknownSource
        )
    }

    /// Categories that describe a single frame heard on the medium.
    pub fn is_per_frame(self) -> bool {
        self != MonitorCategory::NodeSilent
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorEvent {
    pub at: Micros,
    pub monitor: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_id: Option<TxId>,
    pub category: MonitorCategory,
    pub src: NodeRef,
    pub dest: NodeRef,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_hex: Option<String>,
}

/// What the monitor's radio produced for one transmission.
#[derive(Debug, Clone, Copy)]
pub enum Heard<'a> {
    Frame { frame: &'a Frame, raw: &'a [u8] },
    Corrupt { raw: &'a [u8], reason: &'a str },
}

struct FrameDesc<'a>(&'a Frame);

impl fmt::Display for FrameDesc<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fr = self.0;
        let ty = match fr.frame_type {
            FrameType::Beacon => "BEACON",
            FrameType::Data => "DATA",
            FrameType::Ack => "ACK",
            FrameType::MacCommand => "MAC_COMMAND",
        };
        write!(f, "{ty} seq {} {}->", fr.seq, fr.src)?;
        if fr.dest == BROADCAST {
            write!(f, "*")?;
        } else {
            write!(f, "{}", fr.dest)?;
        }
        match fr.frame_type {
            FrameType::Beacon if fr.payload.len() == 2 => {
                write!(
                    f,
                    " members {}",
                    u16::from_le_bytes([fr.payload[0], fr.payload[1]])
                )
            }
            FrameType::Data | FrameType::MacCommand => match decode_payload(&fr.payload) {
                Ok(InstructionBody::Text(t)) => write!(f, " TEXT {t:?}"),
                Ok(InstructionBody::Control { endpoint, action }) => {
                    write!(f, " CONTROL ep{endpoint} {}", action.name())?;
                    if let Action::SetLevel(l) = action {
                        write!(f, " {l}")?;
                    }
                    Ok(())
                }
                Err(e) => write!(f, " payload {}", e.name()),
            },
            _ => Ok(()),
        }
    }
}

/// One-line human description of a frame, as used in monitor summaries.
pub fn describe_frame(f: &Frame) -> String {
    FrameDesc(f).to_string()
}

/// Classifies one heard transmission; always yields exactly one event.
///
/// Intrusion categories take precedence over traffic categories. `delivered`
/// says whether the MAC handed this frame to the display as a new frame, which
/// is what turns a text into `TEXT_SHOWN`.
pub fn display_on_frame(
    n: &mut NodeState,
    heard: Heard<'_>,
    at: Micros,
    tx_id: Option<TxId>,
    pan: &PanRegistry,
    delivered: bool,
) -> Vec<MonitorEvent> {
    let monitor = n.addr;
    let event = |category, src, dest, summary: String, raw: &[u8]| MonitorEvent {
        at,
        monitor,
        tx_id,
        category,
        src,
        dest,
        summary,
        frame_hex: Some(hex::encode(raw)),
    };
    let (frame, raw) = match heard {
        Heard::Corrupt { raw, reason } => {
            return vec![event(
                MonitorCategory::FrameCorrupt,
                NodeRef::Unknown,
                NodeRef::Unknown,
                format!("{reason} ({} octets)", raw.len()),
                raw,
            )]
        }
        Heard::Frame { frame, raw } => (frame, raw),
    };
    let src = NodeRef::Addr(frame.src);
    let dest = NodeRef::Addr(frame.dest);
    let desc = FrameDesc(frame);
    if frame.pan_id != pan.pan_id() {
        return vec![event(
            MonitorCategory::IntrusionForeignPan,
            src,
            dest,
            format!("foreign PAN {:#06x}: {desc}", frame.pan_id),
            raw,
        )];
    }
    if !pan.is_participant(frame.src) {
        return vec![event(
            MonitorCategory::IntrusionUnknownSource,
            src,
            dest,
            format!("unknown source {}: {desc}", frame.src),
            raw,
        )];
    }
    n.last_seen
        .entry(frame.src)
        .and_modify(|t| *t = (*t).max(at))
        .or_insert(at);

    let category = match frame.frame_type {
        FrameType::Beacon => MonitorCategory::BeaconSeen,
        FrameType::Ack => MonitorCategory::Delivery,
        FrameType::Data | FrameType::MacCommand => {
            match (frame.dest == n.addr && delivered, decode_payload(&frame.payload)) {
                (true, Ok(InstructionBody::Text(text))) => {
                    n.push_text(text);
                    MonitorCategory::TextShown
                }
                _ => MonitorCategory::CommandSeen,
            }
        }
    };
    vec![event(category, src, dest, desc.to_string(), raw)]
}

/// Flags members not heard from for longer than `silence_threshold`, at most
/// once per member per threshold window. Never-heard members are measured from
/// their association time.
pub fn monitor_census(
    n: &mut NodeState,
    pan: &PanRegistry,
    now: Micros,
    silence_threshold: Micros,
) -> Vec<MonitorEvent> {
    let mut out = Vec::new();
    for (addr, membership) in pan.members() {
        if addr == n.addr {
            continue;
        }
        let baseline = n.last_seen.get(&addr).copied().unwrap_or(membership.joined);
        let silent_for = now.saturating_sub(baseline);
        if silent_for <= silence_threshold {
            continue;
        }
        if let Some(flagged) = n.last_flagged.get(&addr) {
            if now.saturating_sub(*flagged) < silence_threshold {
                continue;
            }
        }
        n.last_flagged.insert(addr, now);
        out.push(MonitorEvent {
            at: now,
            monitor: n.addr,
            tx_id: None,
            category: MonitorCategory::NodeSilent,
            src: NodeRef::Addr(addr),
            dest: NodeRef::Addr(n.addr),
            summary: format!("node {addr} silent for {silent_for} us (since {baseline})"),
            frame_hex: None,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointChange {
    pub endpoint: u8,
    pub previous: u8,
    pub level: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActuatorOutcome {
    pub changes: Vec<EndpointChange>,
    /// Body of a reply to send back to the frame's source.
    pub reply: Option<InstructionBody>,
    /// Why a frame addressed to this node was dropped.
    pub discarded: Option<String>,
}

/// Applies a frame to an actuator. Only DATA frames on the node's PAN, sent
/// to it by the coordinator, can change state; everything else is dropped.
pub fn actuator_on_frame(n: &mut NodeState, f: &Frame, own_pan: u16) -> ActuatorOutcome {
    let mut out = ActuatorOutcome::default();
    if f.pan_id != own_pan || f.dest != n.addr {
        return out;
    }
    let mut discard = |n: &mut NodeState, why: String| {
        n.stats.discarded += 1;
        out.discarded = Some(why);
    };
    if f.frame_type != FrameType::Data {
        discard(n, format!("{:?} frame", f.frame_type));
        return out;
    }
    if f.src != COORDINATOR_ADDR {
        discard(n, format!("instruction from non-coordinator {}", f.src));
        return out;
    }
    match decode_payload(&f.payload) {
        Err(e) => {
            n.stats.malformed += 1;
            discard(n, e.name().to_string());
        }
        Ok(InstructionBody::Text(_)) => discard(n, "text is not handled by actuators".into()),
        Ok(InstructionBody::Control { endpoint, action }) => {
            let Some(level) = n.endpoints.get_mut(&endpoint) else {
                discard(n, format!("no endpoint {endpoint}"));
                return out;
            };
            match action.apply(*level) {
                Some(new) => {
                    out.changes.push(EndpointChange {
                        endpoint,
                        previous: *level,
                        level: new,
                    });
                    *level = new;
                }
                None => {
                    out.reply = Some(InstructionBody::Text(format!("EP{endpoint}={level}")));
                }
            }
        }
    }
    out
}
