//! Declarative scenario documents: parsing, defaults and validation.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{CommandError, LookupTable, TableEntry};
use crate::device::{Role, DEFAULT_DISPLAY_CAPACITY, DEFAULT_ENDPOINTS};
use crate::dtmf::{self, DtmfError};
use crate::mac::config::DEFAULT_BEACON_INTERVAL_US;
use crate::mac::{
    AddressRequest, MacConfig, PanError, PanRegistry, BROADCAST, COORDINATOR_ADDR, MAX_NODE_ADDR,
    MAX_PAYLOAD_OCTETS,
};
use crate::phy::BandId;
use crate::serial::SerialLinkConfig;
use crate::Micros;

pub const DEFAULT_DURATION_US: Micros = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("ParseError: line {line}, column {column}, at `{path}`: {message}")]
    Parse {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },
    #[error("ValidationError: {0}")]
    Validation(#[from] ValidationError),
    #[error("IoError: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("CapacityExceeded: {0} end devices requested, a PAN holds at most 255 plus the coordinator")]
    CapacityExceeded(usize),
    #[error("DuplicateAddress: address {0} is used by more than one node")]
    DuplicateAddress(u16),
    #[error("InvalidAddress: {0}")]
    InvalidAddress(String),
    #[error("CoordinatorCount: need exactly one COORDINATOR, found {0}")]
    CoordinatorCount(usize),
    #[error("MultipleDisplays: at most one DISPLAY_MONITOR is allowed, found {0}")]
    MultipleDisplays(usize),
    #[error("Unsupported: {0}")]
    Unsupported(String),
    #[error("UnsortedScript: script entry {index} at {at} us precedes the entry before it")]
    UnsortedScript { index: usize, at: Micros },
    #[error("ScriptBeyondDuration: script entry at {at} us is past the duration {duration} us")]
    ScriptBeyondDuration { at: Micros, duration: Micros },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Command(#[from] CommandError),
    #[error("{0}")]
    Dtmf(DtmfError),
}

impl ValidationError {
    pub fn name(&self) -> &'static str {
        match self {
            ValidationError::CapacityExceeded(_) => "CapacityExceeded",
            ValidationError::DuplicateAddress(_) => "DuplicateAddress",
            ValidationError::InvalidAddress(_) => "InvalidAddress",
            ValidationError::CoordinatorCount(_) => "CoordinatorCount",
            ValidationError::MultipleDisplays(_) => "MultipleDisplays",
            ValidationError::Unsupported(_) => "Unsupported",
            ValidationError::UnsortedScript { .. } => "UnsortedScript",
            ValidationError::ScriptBeyondDuration { .. } => "ScriptBeyondDuration",
            ValidationError::InvalidConfig(_) => "InvalidConfig",
            ValidationError::Command(e) => e.name(),
            ValidationError::Dtmf(e) => e.name(),
        }
    }
}

/// A node address in a document: a number or `"AUTO"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AddrSpec {
    #[default]
    Auto,
    Fixed(u16),
}

impl Serialize for AddrSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AddrSpec::Auto => s.serialize_str("AUTO"),
            AddrSpec::Fixed(a) => s.serialize_u16(*a),
        }
    }
}

impl<'de> Deserialize<'de> for AddrSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u16),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(a) => Ok(AddrSpec::Fixed(a)),
            Repr::Tag(t) if t == "AUTO" => Ok(AddrSpec::Auto),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!(
                "address must be 0..=255 or \"AUTO\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub dest: u16,
    pub payload_octets: usize,
    /// One frame every `period_us`; ignored when `saturate` is set.
    #[serde(default)]
    pub period_us: Option<Micros>,
    /// Keep exactly one frame queued at all times.
    #[serde(default)]
    pub saturate: bool,
    #[serde(default = "yes")]
    pub ack: bool,
    #[serde(default)]
    pub start_us: Micros,
    #[serde(default)]
    pub arrival: Arrival,
}

/// How periodic traffic spaces its frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Arrival {
    /// Exactly `period_us` apart.
    #[default]
    Periodic,
    /// Exponential gaps with mean `period_us`.
    Poisson,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub role: Role,
    #[serde(default)]
    pub addr: AddrSpec,
    #[serde(default)]
    pub endpoints: Option<Vec<u8>>,
    #[serde(default)]
    pub traffic: Option<TrafficSpec>,
    /// Repeats this entry; only valid with `"addr": "AUTO"`.
    #[serde(default)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacDoc {
    #[serde(default)]
    pub min_be: Option<u8>,
    #[serde(default)]
    pub max_be: Option<u8>,
    #[serde(default)]
    pub max_csma_backoffs: Option<u8>,
    #[serde(default)]
    pub max_frame_retries: Option<u8>,
    #[serde(default)]
    pub ack_wait_us: Option<Micros>,
    /// Only `"UNSLOTTED"` is supported.
    #[serde(default)]
    pub mode: Option<String>,
    /// Guaranteed time slots are not supported; any value is rejected.
    #[serde(default)]
    pub gts: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeaconsConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_beacon_interval")]
    pub interval_us: Micros,
}

fn default_beacon_interval() -> Micros {
    DEFAULT_BEACON_INTERVAL_US
}

impl Default for BeaconsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            interval_us: DEFAULT_BEACON_INTERVAL_US,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerialDoc {
    #[serde(default)]
    pub baud: SerialLinkConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Census period and silence threshold; no census when absent.
    #[serde(default)]
    pub silence_threshold_us: Option<Micros>,
    #[serde(default = "default_display_capacity")]
    pub display_capacity: usize,
}

fn default_display_capacity() -> usize {
    DEFAULT_DISPLAY_CAPACITY
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            silence_threshold_us: None,
            display_capacity: DEFAULT_DISPLAY_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageDoc {
    #[serde(default)]
    pub to: Option<u16>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtmfDoc {
    /// Mono 16-bit PCM WAV, relative to the scenario file.
    #[serde(default)]
    pub wav: Option<PathBuf>,
    /// Keys to synthesize when no WAV is given.
    #[serde(default)]
    pub keys: Option<String>,
    #[serde(default = "default_tone_ms")]
    pub tone_ms: u32,
    #[serde(default = "default_gap_ms")]
    pub gap_ms: u32,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
}

fn default_tone_ms() -> u32 {
    100
}

fn default_gap_ms() -> u32 {
    60
}

fn default_sample_rate() -> u32 {
    dtmf::DEFAULT_SAMPLE_RATE
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectDoc {
    pub hex: String,
    /// Rewrites the PAN field and recomputes the FCS.
    #[serde(default)]
    pub pan_id: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusDoc {
    TypedInput(String),
    Message(MessageDoc),
    DtmfAudio(DtmfDoc),
    InjectRawFrame(InjectDoc),
    DropNode(u16),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptDoc {
    pub at_us: Micros,
    #[serde(flatten)]
    pub stimulus: StimulusDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub pan_id: u16,
    #[serde(default)]
    pub band: BandId,
    #[serde(default)]
    pub noise_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_us: Micros,
    #[serde(default)]
    pub mac: Option<MacDoc>,
    #[serde(default)]
    pub beacons: BeaconsConfig,
    #[serde(default)]
    pub serial: SerialDoc,
    #[serde(default)]
    pub monitor: MonitorConfig,
    /// Replaces the built-in lookup table when present.
    #[serde(default)]
    pub commands: Option<Vec<TableEntry>>,
    /// Destination of free text; defaults to the display node.
    #[serde(default)]
    pub text_dest: Option<u16>,
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub script: Vec<ScriptDoc>,
}

fn default_duration() -> Micros {
    DEFAULT_DURATION_US
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub role: Role,
    pub addr: AddressRequest,
    pub endpoints: Vec<u8>,
    pub traffic: Option<TrafficSpec>,
}

/// Audio ready for the decoder.
#[derive(Debug, Clone, PartialEq)]
pub enum DtmfSource {
    Samples {
        samples: Vec<f64>,
        sample_rate: u32,
    },
    Keys {
        keys: String,
        tone_ms: u32,
        gap_ms: u32,
        noise_std: f64,
        sample_rate: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stimulus {
    TypedInput(String),
    Message { to: Option<u16>, text: String },
    DtmfAudio(DtmfSource),
    InjectRawFrame { psdu: Vec<u8> },
    DropNode(u16),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptItem {
    pub at: Micros,
    pub stimulus: Stimulus,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub pan_id: u16,
    pub band: BandId,
    pub noise_rate: f64,
    pub seed: u64,
    pub duration_us: Micros,
    pub mac: MacConfig,
    pub beacons: BeaconsConfig,
    pub serial: SerialLinkConfig,
    pub monitor: MonitorConfig,
    pub table: LookupTable,
    /// Coordinator first, then end devices in document order (counts expanded).
    pub nodes: Vec<NodeSpec>,
    pub script: Vec<ScriptItem>,
}

impl Scenario {
    pub fn display_addr(&self) -> Option<u16> {
        self.resolved_addrs()
            .into_iter()
            .zip(&self.nodes)
            .find(|(_, n)| n.role == Role::DisplayMonitor)
            .map(|(a, _)| a)
    }

    /// Addresses in node order, as association will assign them.
    pub fn resolved_addrs(&self) -> Vec<u16> {
        let mut pan = PanRegistry::new(self.pan_id);
        let mut out = vec![COORDINATOR_ADDR; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let AddressRequest::Fixed(a) = n.addr {
                out[i] = a;
                let _ = pan.associate(self.pan_id, n.addr, 0);
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.role != Role::Coordinator && n.addr == AddressRequest::Auto {
                out[i] = pan.associate(self.pan_id, n.addr, 0).unwrap_or(COORDINATOR_ADDR);
            }
        }
        out
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PAN {:#06x}, {:?}, {} nodes, {} stimuli, {} us, seed {}",
            self.pan_id,
            self.band,
            self.nodes.len(),
            self.script.len(),
            self.duration_us,
            self.seed
        )
    }
}

/// Parses a JSON document with the same error shape as [`load_scenario`].
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError::Parse {
            line: inner.line(),
            column: inner.column(),
            path,
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        path: ".".into(),
        message: e.to_string(),
    })?;
    Ok(value)
}

/// Parses and validates a scenario; relative WAV paths resolve against the
/// current directory.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    load_scenario_in(text, Path::new("."))
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    load_scenario_in(&text, base)
}

pub fn load_scenario_in(text: &str, base: &Path) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = parse_json(text)?;
    validate(doc, base)
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(ValidationError::InvalidConfig(msg.into()))
}

pub fn validate(doc: ScenarioDoc, base: &Path) -> Result<Scenario, ScenarioError> {
    use ValidationError as V;

    if !(0.0..=1.0).contains(&doc.noise_rate) {
        return Err(invalid(format!(
            "noise_rate {} is outside [0, 1]",
            doc.noise_rate
        )));
    }
    if doc.duration_us == 0 {
        return Err(invalid("duration_us must be positive"));
    }
    if doc.beacons.interval_us == 0 {
        return Err(invalid("beacons.interval_us must be positive"));
    }
    if doc.monitor.silence_threshold_us == Some(0) {
        return Err(invalid("monitor.silence_threshold_us must be positive"));
    }
    if doc.monitor.display_capacity == 0 {
        return Err(invalid("monitor.display_capacity must be positive"));
    }
    let mac = mac_config(doc.mac.as_ref())?;

    // Nodes: expand counts, check roles, then dry-run association.
    let coordinators = doc.nodes.iter().filter(|n| n.role == Role::Coordinator).count();
    if coordinators != 1 {
        return Err(V::CoordinatorCount(coordinators).into());
    }
    let displays: usize = doc
        .nodes
        .iter()
        .filter(|n| n.role == Role::DisplayMonitor)
        .map(|n| n.count.unwrap_or(1))
        .sum();
    if displays > 1 {
        return Err(V::MultipleDisplays(displays).into());
    }
    let mut nodes = Vec::new();
    let coordinator = doc
        .nodes
        .iter()
        .find(|n| n.role == Role::Coordinator)
        .expect("counted");
    if !matches!(
        coordinator.addr,
        AddrSpec::Auto | AddrSpec::Fixed(COORDINATOR_ADDR)
    ) {
        return Err(V::InvalidAddress("the coordinator always has address 0".into()).into());
    }
    if coordinator.count.is_some_and(|c| c != 1) || coordinator.endpoints.is_some() {
        return Err(invalid("the coordinator takes no count or endpoints"));
    }
    nodes.push(NodeSpec {
        role: Role::Coordinator,
        addr: AddressRequest::Fixed(COORDINATOR_ADDR),
        endpoints: Vec::new(),
        traffic: coordinator.traffic,
    });
    let mut end_devices = 0usize;
    for n in doc.nodes.iter().filter(|n| n.role != Role::Coordinator) {
        let count = n.count.unwrap_or(1);
        if count > 1 && n.addr != AddrSpec::Auto {
            return Err(invalid("`count` needs \"addr\": \"AUTO\""));
        }
        let endpoints = match (&n.role, &n.endpoints) {
            (Role::Actuator, Some(e)) => {
                let set: BTreeSet<u8> = e.iter().copied().collect();
                if set.len() != e.len() {
                    return Err(invalid("duplicate actuator endpoint"));
                }
                e.clone()
            }
            (Role::Actuator, None) => DEFAULT_ENDPOINTS.to_vec(),
            (_, Some(_)) => return Err(invalid("only actuators have endpoints")),
            (_, None) => Vec::new(),
        };
        if let Some(t) = &n.traffic {
            check_traffic(t)?;
        }
        end_devices += count;
        if end_devices > MAX_NODE_ADDR as usize {
            return Err(V::CapacityExceeded(
                doc.nodes
                    .iter()
                    .filter(|n| n.role != Role::Coordinator)
                    .map(|n| n.count.unwrap_or(1))
                    .sum(),
            )
            .into());
        }
        let addr = match n.addr {
            AddrSpec::Auto => AddressRequest::Auto,
            AddrSpec::Fixed(a) => AddressRequest::Fixed(a),
        };
        for _ in 0..count {
            nodes.push(NodeSpec {
                role: n.role,
                addr,
                endpoints: endpoints.clone(),
                traffic: n.traffic,
            });
        }
    }
    let mut pan = PanRegistry::new(doc.pan_id);
    let fixed_then_auto = nodes[1..]
        .iter()
        .filter(|n| n.addr != AddressRequest::Auto)
        .chain(nodes[1..].iter().filter(|n| n.addr == AddressRequest::Auto));
    for n in fixed_then_auto {
        pan.associate(doc.pan_id, n.addr, 0).map_err(|e| match e {
            PanError::CapacityExceeded => V::CapacityExceeded(end_devices),
            PanError::DuplicateAddress(a) => V::DuplicateAddress(a),
            other => V::InvalidAddress(other.to_string()),
        })?;
    }

    let table = match &doc.commands {
        Some(entries) => LookupTable::new(entries, 0),
        None => Ok(LookupTable::with_defaults(0)),
    }
    .map_err(V::Command)?;

    let mut scenario = Scenario {
        pan_id: doc.pan_id,
        band: doc.band,
        noise_rate: doc.noise_rate,
        seed: doc.seed,
        duration_us: doc.duration_us,
        mac,
        beacons: doc.beacons,
        serial: doc.serial.baud,
        monitor: doc.monitor,
        table,
        nodes,
        script: Vec::new(),
    };
    let text_dest = doc
        .text_dest
        .or_else(|| scenario.display_addr())
        .unwrap_or(COORDINATOR_ADDR);
    scenario.table = match &doc.commands {
        Some(entries) => LookupTable::new(entries, text_dest),
        None => Ok(LookupTable::with_defaults(text_dest)),
    }
    .map_err(V::Command)?;

    let mut prev = 0;
    for (i, item) in doc.script.into_iter().enumerate() {
        if item.at_us < prev {
            return Err(V::UnsortedScript {
                index: i,
                at: item.at_us,
            }
            .into());
        }
        if item.at_us > doc.duration_us {
            return Err(V::ScriptBeyondDuration {
                at: item.at_us,
                duration: doc.duration_us,
            }
            .into());
        }
        prev = item.at_us;
        scenario.script.push(ScriptItem {
            at: item.at_us,
            stimulus: stimulus(item.stimulus, base)?,
        });
    }
    Ok(scenario)
}

fn mac_config(doc: Option<&MacDoc>) -> Result<MacConfig, ScenarioError> {
    let mut cfg = MacConfig::default();
    let Some(d) = doc else {
        return Ok(cfg);
    };
    if let Some(mode) = &d.mode {
        if !mode.eq_ignore_ascii_case("UNSLOTTED") {
            return Err(ValidationError::Unsupported(format!(
                "MAC mode {mode:?}; only UNSLOTTED (nonbeacon-enabled) CSMA-CA is supported"
            ))
            .into());
        }
    }
    if d.gts.is_some() {
        return Err(
            ValidationError::Unsupported("guaranteed time slots (GTS) are not supported".into()).into(),
        );
    }
    cfg.min_be = d.min_be.unwrap_or(cfg.min_be);
    cfg.max_be = d.max_be.unwrap_or(cfg.max_be);
    cfg.max_csma_backoffs = d.max_csma_backoffs.unwrap_or(cfg.max_csma_backoffs);
    cfg.max_frame_retries = d.max_frame_retries.unwrap_or(cfg.max_frame_retries);
    cfg.ack_wait_us = d.ack_wait_us;
    cfg.validate().map_err(|e| invalid(e.0))?;
    Ok(cfg)
}

fn check_traffic(t: &TrafficSpec) -> Result<(), ScenarioError> {
    if t.payload_octets > MAX_PAYLOAD_OCTETS {
        return Err(invalid(format!(
            "traffic payload of {} octets exceeds {MAX_PAYLOAD_OCTETS}",
            t.payload_octets
        )));
    }
    if t.dest > MAX_NODE_ADDR && t.dest != BROADCAST {
        return Err(ValidationError::InvalidAddress(format!("traffic dest {}", t.dest)).into());
    }
    if t.dest == BROADCAST && t.ack {
        return Err(invalid("broadcast traffic cannot request acks"));
    }
    match (t.saturate, t.period_us) {
        (true, None) | (false, Some(1..)) => Ok(()),
        _ => Err(invalid(
            "traffic needs either `saturate` or a positive `period_us`",
        )),
    }
}

fn stimulus(doc: StimulusDoc, base: &Path) -> Result<Stimulus, ScenarioError> {
    Ok(match doc {
        StimulusDoc::TypedInput(s) => Stimulus::TypedInput(s),
        StimulusDoc::Message(m) => Stimulus::Message {
            to: m.to,
            text: m.text,
        },
        StimulusDoc::DropNode(a) => Stimulus::DropNode(a),
        StimulusDoc::InjectRawFrame(i) => {
            let mut psdu =
                hex::decode(i.hex.trim()).map_err(|e| invalid(format!("inject_raw_frame hex: {e}")))?;
            if psdu.len() > crate::phy::MAX_PSDU_OCTETS {
                return Err(invalid(format!(
                    "injected frame of {} octets is too long",
                    psdu.len()
                )));
            }
            if let Some(pan) = i.pan_id {
                if psdu.len() < crate::mac::frame::MIN_FRAME_OCTETS {
                    return Err(invalid("pan_id override needs a full frame"));
                }
                psdu[3..5].copy_from_slice(&pan.to_le_bytes());
                let n = psdu.len();
                let fcs = crate::mac::crc16_itu(&psdu[..n - 2]);
                psdu[n - 2..].copy_from_slice(&fcs.to_le_bytes());
            }
            Stimulus::InjectRawFrame { psdu }
        }
        StimulusDoc::DtmfAudio(d) => Stimulus::DtmfAudio(match (d.wav, d.keys) {
            (Some(path), None) => {
                let full = base.join(&path);
                let (samples, sample_rate) = dtmf::read_wav(&full).map_err(|e| match e {
                    DtmfError::Io(msg) => ScenarioError::Io(format!("{}: {msg}", full.display())),
                    other => ValidationError::Dtmf(other).into(),
                })?;
                DtmfSource::Samples { samples, sample_rate }
            }
            (None, Some(keys)) => {
                for k in keys.chars() {
                    dtmf::key_position(k).map_err(ValidationError::Dtmf)?;
                }
                if !(d.noise_std >= 0.0 && d.noise_std.is_finite()) {
                    return Err(invalid("noise_std must be a finite non-negative number"));
                }
                if d.sample_rate < dtmf::MIN_SAMPLE_RATE {
                    return Err(ValidationError::Dtmf(DtmfError::SampleRateTooLow(d.sample_rate)).into());
                }
                DtmfSource::Keys {
                    keys,
                    tone_ms: d.tone_ms,
                    gap_ms: d.gap_ms,
                    noise_std: d.noise_std,
                    sample_rate: d.sample_rate,
                }
            }
            _ => return Err(invalid("dtmf_audio needs exactly one of `wav` or `keys`")),
        }),
    })
}
