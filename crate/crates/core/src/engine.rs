//! Deterministic discrete-event engine tying medium, MAC and devices together.
//!
//! Events are ordered by `(time, node address, insertion order)`. Every random
//! draw comes from a per-node counter-based stream, so a node's draws do not
//! depend on what other nodes do.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{classify_and_parse, encode_payload, CommandError, Instruction, InstructionBody};
use crate::device::{
    actuator_on_frame, describe_frame, display_on_frame, monitor_census, Heard, MonitorCategory, NodeState,
    Role,
};
use crate::dtmf::{self, DetectorConfig, DtmfError};
use crate::log::{
    DeviceStateRecord, FrameHeader, LogEntry, LogRecord, MacEvent, MacEventRecord, RxRecord, StimulusRecord,
    StimulusSource, TxRecord,
};
use crate::mac::{
    AddressRequest, BeaconSchedule, CcaVerdict, Csma, Delivery, Frame, FrameType, MacConfig, MacTiming,
    PanRegistry, BROADCAST, COORDINATOR_ADDR,
};
use crate::phy::{BandConfig, Medium, ReceptionOutcome, RxStatus, TxId};
use crate::rng::StreamRng;
use crate::scenario::{Arrival, DtmfSource, Scenario, Stimulus, TrafficSpec};
use crate::serial::SerialLink;
use crate::Micros;

/// Address of the pseudo-node that transmits injected frames.
pub const INTRUDER_ADDR: u16 = 0xFFFE;
/// RNG stream for stimulus synthesis, outside the node address space.
pub const STIMULUS_STREAM: u64 = 0x1_0000;
/// Base of the per-node streams that draw Poisson traffic gaps.
pub const TRAFFIC_STREAM_BASE: u64 = 0x2_0000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubmitError {
    #[error("DestinationUnknown: address {0} is not a member of the PAN")]
    DestinationUnknown(u16),
    #[error("{0}")]
    Command(#[from] CommandError),
    #[error("{0}")]
    Dtmf(#[from] DtmfError),
    #[error("DtmfTextRejected: DTMF input carries control commands only, got {0:?}")]
    DtmfTextRejected(String),
    #[error("UnknownNode: no node with address {0}")]
    UnknownNode(u16),
}

impl SubmitError {
    pub fn name(&self) -> &'static str {
        match self {
            SubmitError::DestinationUnknown(_) => "DestinationUnknown",
            SubmitError::Command(e) => e.name(),
            SubmitError::Dtmf(e) => e.name(),
            SubmitError::DtmfTextRejected(_) => "DtmfTextRejected",
            SubmitError::UnknownNode(_) => "UnknownNode",
        }
    }
}

/// Handle for a coordinator submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub submission: u64,
    pub seq: u8,
    /// When the frame reaches the MAC, after the serial hop.
    pub mac_at: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubmissionStatus {
    Pending {
        seq: u8,
    },
    Done {
        seq: u8,
        delivery: Delivery,
        attempts: u8,
        at: Micros,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmfOutcome {
    pub keys: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<Instruction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receipt: Option<Receipt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Event {
    Stimulus(usize),
    SerialDone(u64),
    Cca { node: u16, token: u64 },
    TxEnd(TxId),
    AckTimeout { node: u16, token: u64 },
    SendAck { node: u16, ack: Frame },
    Beacon,
    Census,
    Traffic(u16),
}

#[derive(Debug)]
struct Scheduled {
    at: Micros,
    node: u16,
    order: u64,
    event: Event,
}

impl Scheduled {
    fn key(&self) -> (Micros, u16, u64) {
        (self.at, self.node, self.order)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

#[derive(Debug, Clone)]
struct Outgoing {
    psdu: Vec<u8>,
    seq: u8,
    dest: u16,
    ack: bool,
    submission: Option<u64>,
    injected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Backoff,
    OnAir(TxId),
    AwaitAck,
}

#[derive(Debug)]
struct InFlight {
    out: Outgoing,
    attempt: u8,
    csma: Csma,
    phase: Phase,
}

#[derive(Debug, Default)]
struct MacEntity {
    queue: VecDeque<Outgoing>,
    inflight: Option<InFlight>,
    dsn: u8,
    token: u64,
    on_air_until: Micros,
    last_rx: BTreeMap<u16, u8>,
}

impl MacEntity {
    fn next_seq(&mut self) -> u8 {
        let s = self.dsn;
        self.dsn = self.dsn.wrapping_add(1);
        s
    }
}

#[derive(Debug)]
struct SimNode {
    /// `None` for the intruder pseudo-node.
    device: Option<NodeState>,
    rng: StreamRng,
    mac: MacEntity,
    traffic: Option<TrafficSpec>,
    traffic_rng: StreamRng,
}

impl SimNode {
    fn online(&self) -> bool {
        self.device.as_ref().map_or(true, |d| d.online)
    }
}

/// Final state and complete log of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<LogRecord>,
    pub nodes: Vec<NodeState>,
}

pub struct Engine {
    scenario: Scenario,
    band: BandConfig,
    timing: MacTiming,
    now: Micros,
    /// Events at or after this time are not processed.
    horizon: Option<Micros>,
    queue: BinaryHeap<Scheduled>,
    inserted: u64,
    medium: Medium,
    pan: PanRegistry,
    nodes: BTreeMap<u16, SimNode>,
    beacons: Option<BeaconSchedule>,
    serial: SerialLink,
    display: Option<u16>,
    stimulus_rng: StreamRng,
    pending: VecDeque<LogRecord>,
    next_index: u64,
    in_serial: BTreeMap<u64, Outgoing>,
    submissions: BTreeMap<u64, SubmissionStatus>,
    next_submission: u64,
}

impl Engine {
    /// Builds the network and runs the association phase at t = 0: the
    /// coordinator, then fixed addresses ascending, then `AUTO` nodes in
    /// document order.
    pub fn new(scenario: Scenario) -> Self {
        let band = scenario.band.config();
        let timing = scenario.mac.timing(&band);
        let mut e = Engine {
            band,
            timing,
            now: 0,
            horizon: Some(scenario.duration_us),
            queue: BinaryHeap::new(),
            inserted: 0,
            medium: Medium::new(band, scenario.noise_rate),
            pan: PanRegistry::new(scenario.pan_id),
            nodes: BTreeMap::new(),
            beacons: scenario
                .beacons
                .enabled
                .then(|| BeaconSchedule::new(scenario.beacons.interval_us)),
            serial: SerialLink::new(scenario.serial),
            display: None,
            stimulus_rng: StreamRng::new(scenario.seed, STIMULUS_STREAM),
            pending: VecDeque::new(),
            next_index: 1,
            in_serial: BTreeMap::new(),
            submissions: BTreeMap::new(),
            next_submission: 1,
            scenario,
        };
        e.associate_all();
        e.nodes.insert(
            INTRUDER_ADDR,
            SimNode {
                device: None,
                rng: StreamRng::new(e.scenario.seed, INTRUDER_ADDR as u64),
                mac: MacEntity::default(),
                traffic: None,
                traffic_rng: StreamRng::new(e.scenario.seed, TRAFFIC_STREAM_BASE + INTRUDER_ADDR as u64),
            },
        );
        if e.beacons.is_some() {
            e.schedule(0, COORDINATOR_ADDR, Event::Beacon);
        }
        if let (Some(threshold), Some(display)) = (e.scenario.monitor.silence_threshold_us, e.display) {
            e.schedule(threshold, display, Event::Census);
        }
        let traffic: Vec<(u16, Micros)> = e
            .nodes
            .iter()
            .filter_map(|(a, n)| n.traffic.map(|t| (*a, t.start_us)))
            .collect();
        for (addr, start) in traffic {
            e.schedule(start, addr, Event::Traffic(addr));
        }
        for i in 0..e.scenario.script.len() {
            let at = e.scenario.script[i].at;
            e.schedule(at, COORDINATOR_ADDR, Event::Stimulus(i));
        }
        e
    }

    fn associate_all(&mut self) {
        let pan_id = self.scenario.pan_id;
        self.log_mac(COORDINATOR_ADDR, MacEvent::PanStarted { pan_id });
        let specs = self.scenario.nodes.clone();
        let mut order: Vec<usize> = (1..specs.len())
            .filter(|i| specs[*i].addr != AddressRequest::Auto)
            .collect();
        order.sort_by_key(|i| match specs[*i].addr {
            AddressRequest::Fixed(a) => a,
            AddressRequest::Auto => u16::MAX,
        });
        order.extend((1..specs.len()).filter(|i| specs[*i].addr == AddressRequest::Auto));

        self.add_node(COORDINATOR_ADDR, NodeState::coordinator(), specs[0].traffic);
        for i in order {
            let spec = &specs[i];
            // Validation already dry-ran association, so this cannot fail.
            let addr = self
                .pan
                .associate(pan_id, spec.addr, 0)
                .expect("scenario validated");
            let mut state = match spec.role {
                Role::Actuator => NodeState::actuator(addr, &spec.endpoints),
                Role::DisplayMonitor => {
                    self.display = Some(addr);
                    NodeState::display(addr, self.scenario.monitor.display_capacity)
                }
                Role::Coordinator => unreachable!("one coordinator, listed first"),
            };
            state.associated = true;
            self.add_node(addr, state, spec.traffic);
            self.log_mac(
                addr,
                MacEvent::Associated {
                    pan_id,
                    auto: spec.addr == AddressRequest::Auto,
                },
            );
        }
    }

    fn add_node(&mut self, addr: u16, state: NodeState, traffic: Option<TrafficSpec>) {
        self.nodes.insert(
            addr,
            SimNode {
                device: Some(state),
                rng: StreamRng::new(self.scenario.seed, addr as u64),
                mac: MacEntity::default(),
                traffic,
                traffic_rng: StreamRng::new(self.scenario.seed, TRAFFIC_STREAM_BASE + addr as u64),
            },
        );
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn timing(&self) -> MacTiming {
        self.timing
    }

    pub fn band(&self) -> &BandConfig {
        &self.band
    }

    pub fn pan(&self) -> &PanRegistry {
        &self.pan
    }

    /// Removes the duration limit, for open-ended interactive sessions.
    pub fn set_unbounded(&mut self) {
        self.horizon = None;
    }

    pub fn node(&self, addr: u16) -> Option<&NodeState> {
        self.nodes.get(&addr).and_then(|n| n.device.as_ref())
    }

    /// Device nodes in address order.
    pub fn nodes(&self) -> Vec<NodeState> {
        self.nodes.values().filter_map(|n| n.device.clone()).collect()
    }

    pub fn submission(&self, id: u64) -> Option<SubmissionStatus> {
        self.submissions.get(&id).copied()
    }

    /// Time of the next event that would be processed.
    pub fn next_event_at(&self) -> Option<Micros> {
        let at = self.queue.peek()?.at;
        match self.horizon {
            Some(h) if at >= h => None,
            _ => Some(at),
        }
    }

    /// Records produced but not yet taken by [`Engine::step`] or [`Engine::drain`].
    pub fn drain(&mut self) -> Vec<LogRecord> {
        self.pending.drain(..).collect()
    }

    /// Next log record, processing events as needed; `None` once done.
    pub fn step(&mut self) -> Option<LogRecord> {
        while self.pending.is_empty() {
            if !self.step_event() {
                return None;
            }
        }
        self.pending.pop_front()
    }

    /// Processes exactly one event; `false` when none is left before the horizon.
    pub fn step_event(&mut self) -> bool {
        if self.next_event_at().is_none() {
            return false;
        }
        let ev = self.queue.pop().expect("peeked");
        self.now = ev.at;
        self.handle(ev.event);
        true
    }

    /// Processes every event at or before `t`, then sets the clock to `t`.
    pub fn run_until(&mut self, t: Micros) {
        while self.next_event_at().is_some_and(|at| at <= t) {
            self.step_event();
        }
        self.now = self.now.max(t);
    }

    /// Runs to the scenario duration.
    pub fn run(mut self) -> RunOutput {
        let mut records: Vec<LogRecord> = self.drain();
        while self.step_event() {
            records.extend(self.pending.drain(..));
        }
        RunOutput {
            records,
            nodes: self.nodes(),
        }
    }

    fn schedule(&mut self, at: Micros, node: u16, event: Event) {
        self.inserted += 1;
        self.queue.push(Scheduled {
            at,
            node,
            order: self.inserted,
            event,
        });
    }

    fn record(&mut self, entry: LogEntry) {
        let index = self.next_index;
        self.next_index += 1;
        self.pending.push_back(LogRecord {
            index,
            at: self.now,
            entry,
        });
    }

    fn log_mac(&mut self, node: u16, event: MacEvent) {
        self.record(LogEntry::MacEvent(MacEventRecord { node, event }));
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::Stimulus(i) => self.on_stimulus(i),
            Event::SerialDone(id) => {
                if let Some(out) = self.in_serial.remove(&id) {
                    self.enqueue(COORDINATOR_ADDR, out);
                }
            }
            Event::Cca { node, token } => self.on_cca(node, token),
            Event::TxEnd(id) => self.on_tx_end(id),
            Event::AckTimeout { node, token } => self.on_ack_timeout(node, token),
            Event::SendAck { node, ack } => self.on_send_ack(node, ack),
            Event::Beacon => self.on_beacon(),
            Event::Census => self.on_census(),
            Event::Traffic(node) => self.on_traffic(node),
        }
    }

    // ---- stimuli and submissions ----

    fn on_stimulus(&mut self, i: usize) {
        let stimulus = self.scenario.script[i].stimulus.clone();
        match stimulus {
            Stimulus::TypedInput(input) => {
                let _ = self.submit_input(&input);
            }
            Stimulus::Message { to, text } => {
                let _ = self.submit_message(to, &text);
            }
            Stimulus::DtmfAudio(src) => {
                let audio = match src {
                    DtmfSource::Samples { samples, sample_rate } => Ok((samples, sample_rate)),
                    DtmfSource::Keys {
                        keys,
                        tone_ms,
                        gap_ms,
                        noise_std,
                        sample_rate,
                    } => dtmf::synthesize_sequence(
                        &keys,
                        tone_ms,
                        gap_ms,
                        sample_rate,
                        0.25,
                        noise_std,
                        &mut self.stimulus_rng,
                    )
                    .map(|s| (s, sample_rate)),
                };
                match audio {
                    Ok((samples, rate)) => {
                        let _ = self.submit_dtmf(&samples, rate);
                    }
                    Err(e) => self.record(LogEntry::Stimulus(StimulusRecord {
                        source: StimulusSource::Dtmf,
                        input: None,
                        instruction: None,
                        submission: None,
                        error: Some(e.to_string()),
                    })),
                }
            }
            Stimulus::InjectRawFrame { psdu } => self.inject(psdu),
            Stimulus::DropNode(addr) => {
                let _ = self.drop_node(addr);
            }
        }
    }

    fn stimulus_error(&mut self, source: StimulusSource, input: Option<String>, e: &SubmitError) {
        self.record(LogEntry::Stimulus(StimulusRecord {
            source,
            input,
            instruction: None,
            submission: None,
            error: Some(e.to_string()),
        }));
    }

    /// Classifies typed input and submits it through the coordinator.
    pub fn submit_input(&mut self, input: &str) -> Result<(Instruction, Receipt), SubmitError> {
        match classify_and_parse(input, &self.scenario.table) {
            Ok(instr) => {
                let r = self.submit(instr.clone(), StimulusSource::Typed, Some(input.to_string()))?;
                Ok((instr, r))
            }
            Err(e) => {
                let e = SubmitError::from(e);
                self.stimulus_error(StimulusSource::Typed, Some(input.to_string()), &e);
                Err(e)
            }
        }
    }

    /// Sends free text; `to` defaults to the configured text destination.
    pub fn submit_message(&mut self, to: Option<u16>, text: &str) -> Result<Receipt, SubmitError> {
        let dest = to.unwrap_or(self.scenario.table.text_dest());
        self.submit(Instruction::text(dest, text), StimulusSource::Message, None)
    }

    /// Decodes keypad audio and submits the resulting control command. An
    /// empty key string is a successful no-op.
    pub fn submit_dtmf(&mut self, samples: &[f64], sample_rate: u32) -> Result<DtmfOutcome, SubmitError> {
        let decoded = dtmf::decode_key_sequence(
            samples,
            sample_rate,
            &DetectorConfig::for_sample_rate(sample_rate),
        );
        let keys = match decoded {
            Ok(events) => dtmf::keys_to_string(&events),
            Err(e) => {
                let e = SubmitError::from(e);
                self.stimulus_error(StimulusSource::Dtmf, None, &e);
                return Err(e);
            }
        };
        if keys.is_empty() {
            self.record(LogEntry::Stimulus(StimulusRecord {
                source: StimulusSource::Dtmf,
                input: Some(keys.clone()),
                instruction: None,
                submission: None,
                error: None,
            }));
            return Ok(DtmfOutcome {
                keys,
                instruction: None,
                receipt: None,
            });
        }
        let instr = match classify_and_parse(&keys, &self.scenario.table) {
            Ok(i) if i.is_text() => Err(SubmitError::DtmfTextRejected(keys.clone())),
            Ok(i) => Ok(i),
            Err(e) => Err(e.into()),
        };
        match instr {
            Ok(instr) => {
                let receipt = self.submit(instr.clone(), StimulusSource::Dtmf, Some(keys.clone()))?;
                Ok(DtmfOutcome {
                    keys,
                    instruction: Some(instr),
                    receipt: Some(receipt),
                })
            }
            Err(e) => {
                self.stimulus_error(StimulusSource::Dtmf, Some(keys), &e);
                Err(e)
            }
        }
    }

    /// Hands an instruction to the coordinator: it crosses the serial link,
    /// then goes out as an acknowledged DATA frame.
    pub fn submit(
        &mut self,
        instr: Instruction,
        source: StimulusSource,
        input: Option<String>,
    ) -> Result<Receipt, SubmitError> {
        let checked = if self.pan.is_member(instr.dest) {
            encode_payload(&instr.body).map_err(SubmitError::from)
        } else {
            Err(SubmitError::DestinationUnknown(instr.dest))
        };
        let payload = match checked {
            Ok(p) => p,
            Err(e) => {
                self.record(LogEntry::Stimulus(StimulusRecord {
                    source,
                    input,
                    instruction: Some(instr),
                    submission: None,
                    error: Some(e.to_string()),
                }));
                return Err(e);
            }
        };
        let coordinator = self.nodes.get_mut(&COORDINATOR_ADDR).expect("coordinator");
        let seq = coordinator.mac.next_seq();
        let frame = Frame::data(seq, self.pan.pan_id(), instr.dest, COORDINATOR_ADDR, payload);
        let psdu = frame.encode().expect("payload checked by encode_payload");
        let mac_at = self.serial.transfer(self.now, frame.payload.len());
        let submission = self.next_submission;
        self.next_submission += 1;
        self.submissions
            .insert(submission, SubmissionStatus::Pending { seq });
        self.record(LogEntry::Stimulus(StimulusRecord {
            source,
            input,
            instruction: Some(instr.clone()),
            submission: Some(submission),
            error: None,
        }));
        self.log_mac(
            COORDINATOR_ADDR,
            MacEvent::Submitted {
                submission,
                seq,
                dest: instr.dest,
                payload_octets: frame.payload.len(),
                mac_at,
            },
        );
        self.in_serial.insert(
            submission,
            Outgoing {
                psdu,
                seq,
                dest: instr.dest,
                ack: true,
                submission: Some(submission),
                injected: false,
            },
        );
        self.schedule(mac_at, COORDINATOR_ADDR, Event::SerialDone(submission));
        Ok(Receipt {
            submission,
            seq,
            mac_at,
        })
    }

    /// Puts raw octets on the air from the intruder pseudo-node, after CSMA-CA.
    pub fn inject(&mut self, psdu: Vec<u8>) {
        self.record(LogEntry::Stimulus(StimulusRecord {
            source: StimulusSource::Inject,
            input: Some(hex::encode(&psdu)),
            instruction: None,
            submission: None,
            error: None,
        }));
        let (seq, dest) = Frame::decode(&psdu)
            .map(|f| (f.seq, f.dest))
            .unwrap_or((0, BROADCAST));
        self.enqueue(
            INTRUDER_ADDR,
            Outgoing {
                psdu,
                seq,
                dest,
                ack: false,
                submission: None,
                injected: true,
            },
        );
    }

    /// Takes an end device off the air. It stays a PAN member.
    pub fn drop_node(&mut self, addr: u16) -> Result<(), SubmitError> {
        let ok = addr != COORDINATOR_ADDR && self.nodes.get(&addr).is_some_and(|n| n.device.is_some());
        self.record(LogEntry::Stimulus(StimulusRecord {
            source: StimulusSource::DropNode,
            input: Some(addr.to_string()),
            instruction: None,
            submission: None,
            error: (!ok).then(|| SubmitError::UnknownNode(addr).to_string()),
        }));
        if !ok {
            return Err(SubmitError::UnknownNode(addr));
        }
        let node = self.nodes.get_mut(&addr).expect("checked");
        if let Some(d) = node.device.as_mut() {
            d.online = false;
        }
        node.mac.queue.clear();
        node.mac.inflight = None;
        node.mac.token += 1;
        self.log_mac(addr, MacEvent::NodeDropped);
        Ok(())
    }

    // ---- MAC ----

    fn enqueue(&mut self, addr: u16, out: Outgoing) {
        let Some(node) = self.nodes.get_mut(&addr) else {
            return;
        };
        if !node.online() {
            return;
        }
        node.mac.queue.push_back(out);
        self.kick(addr);
    }

    fn kick(&mut self, addr: u16) {
        let node = self.nodes.get_mut(&addr).expect("known node");
        if node.mac.inflight.is_some() || !node.online() {
            return;
        }
        let Some(out) = node.mac.queue.pop_front() else {
            return;
        };
        node.mac.inflight = Some(InFlight {
            out,
            attempt: 1,
            csma: Csma::new(&self.scenario.mac),
            phase: Phase::Backoff,
        });
        self.schedule_cca(addr);
    }

    fn schedule_cca(&mut self, addr: u16) {
        let unit = self.timing.backoff_unit;
        let node = self.nodes.get_mut(&addr).expect("known node");
        let inflight = node.mac.inflight.as_mut().expect("in flight");
        inflight.phase = Phase::Backoff;
        let periods = inflight.csma.draw_periods(&mut node.rng);
        node.mac.token += 1;
        let token = node.mac.token;
        self.schedule(self.now + periods * unit, addr, Event::Cca { node: addr, token });
    }

    fn on_cca(&mut self, addr: u16, token: u64) {
        let busy = self.medium.cca(self.now);
        let cfg: MacConfig = self.scenario.mac;
        let node = self.nodes.get_mut(&addr).expect("known node");
        if node.mac.token != token {
            return;
        }
        let Some(inflight) = node.mac.inflight.as_mut() else {
            return;
        };
        match inflight.csma.on_cca(busy, &cfg) {
            CcaVerdict::Transmit => {
                let psdu = inflight.out.psdu.clone();
                let injected = inflight.out.injected;
                let id = self.transmit(addr, psdu, injected);
                let node = self.nodes.get_mut(&addr).expect("known node");
                node.mac.inflight.as_mut().expect("in flight").phase = Phase::OnAir(id);
            }
            CcaVerdict::BackOffAgain => self.schedule_cca(addr),
            CcaVerdict::ChannelAccessFailure => {
                let (seq, attempt, ack) = (inflight.out.seq, inflight.attempt, inflight.out.ack);
                self.log_mac(addr, MacEvent::ChannelAccessFailure { seq, attempt });
                if ack {
                    self.retry_or_fail(addr, Delivery::ChannelAccessFailure);
                } else {
                    self.finish(addr, Delivery::ChannelAccessFailure);
                }
            }
        }
    }

    /// Starts a transmission now and logs it.
    fn transmit(&mut self, addr: u16, psdu: Vec<u8>, injected: bool) -> TxId {
        let tx = self
            .medium
            .begin(addr, self.now, psdu)
            .expect("queued frames fit the PHY")
            .clone();
        if let Some(n) = self.nodes.get_mut(&addr) {
            n.mac.on_air_until = tx.end;
        }
        let decoded = Frame::decode(&tx.psdu);
        self.record(LogEntry::Tx(TxRecord {
            tx_id: tx.id,
            node: addr,
            end: tx.end,
            octets: tx.psdu.len(),
            frame: decoded.as_ref().ok().map(FrameHeader::from),
            fcs_ok: decoded.is_ok(),
            injected,
            frame_hex: hex::encode(&tx.psdu),
        }));
        self.schedule(tx.end, addr, Event::TxEnd(tx.id));
        tx.id
    }

    fn retry_or_fail(&mut self, addr: u16, cause: Delivery) {
        let max_attempts = 1 + self.scenario.mac.max_frame_retries;
        let node = self.nodes.get_mut(&addr).expect("known node");
        let inflight = node.mac.inflight.as_mut().expect("in flight");
        if inflight.attempt >= max_attempts {
            self.finish(addr, cause);
            return;
        }
        inflight.attempt += 1;
        inflight.csma = Csma::new(&self.scenario.mac);
        self.schedule_cca(addr);
    }

    fn finish(&mut self, addr: u16, result: Delivery) {
        let node = self.nodes.get_mut(&addr).expect("known node");
        let Some(done) = node.mac.inflight.take() else {
            return;
        };
        node.mac.token += 1;
        let out = done.out;
        if out.ack {
            self.log_mac(
                addr,
                MacEvent::SendDone {
                    seq: out.seq,
                    dest: out.dest,
                    result,
                    attempts: done.attempt,
                    submission: out.submission,
                },
            );
        } else if result == Delivery::Delivered {
            self.log_mac(
                addr,
                MacEvent::Sent {
                    seq: out.seq,
                    dest: out.dest,
                },
            );
        } else {
            self.log_mac(
                addr,
                MacEvent::SendDone {
                    seq: out.seq,
                    dest: out.dest,
                    result,
                    attempts: done.attempt,
                    submission: out.submission,
                },
            );
        }
        if let Some(id) = out.submission {
            self.submissions.insert(
                id,
                SubmissionStatus::Done {
                    seq: out.seq,
                    delivery: result,
                    attempts: done.attempt,
                    at: self.now,
                },
            );
        }
        let saturating = self.nodes[&addr].traffic.is_some_and(|t| t.saturate);
        if saturating && !out.injected && out.submission.is_none() {
            self.generate_traffic(addr);
        }
        self.kick(addr);
    }

    fn on_ack_timeout(&mut self, addr: u16, token: u64) {
        let node = self.nodes.get_mut(&addr).expect("known node");
        if node.mac.token != token {
            return;
        }
        let Some(inflight) = node.mac.inflight.as_ref() else {
            return;
        };
        if inflight.phase != Phase::AwaitAck {
            return;
        }
        let (seq, attempt) = (inflight.out.seq, inflight.attempt);
        self.log_mac(addr, MacEvent::AckTimeout { seq, attempt });
        self.retry_or_fail(addr, Delivery::NoAck);
    }

    fn on_send_ack(&mut self, addr: u16, ack: Frame) {
        let now = self.now;
        let Some(node) = self.nodes.get(&addr) else {
            return;
        };
        // A half-duplex radio that is already sending cannot acknowledge.
        if !node.online() || node.mac.on_air_until > now {
            return;
        }
        let psdu = ack.encode().expect("acks always encode");
        self.transmit(addr, psdu, false);
    }

    fn on_beacon(&mut self) {
        let Some(schedule) = self.beacons.as_mut() else {
            return;
        };
        if let Some(frame) = schedule.beacon_tick(&self.pan, self.now) {
            let next = schedule.next_due();
            let out = Outgoing {
                psdu: frame.encode().expect("beacons always encode"),
                seq: frame.seq,
                dest: BROADCAST,
                ack: false,
                submission: None,
                injected: false,
            };
            self.schedule(next, COORDINATOR_ADDR, Event::Beacon);
            self.enqueue(COORDINATOR_ADDR, out);
        }
    }

    fn on_census(&mut self) {
        let (Some(display), Some(threshold)) = (self.display, self.scenario.monitor.silence_threshold_us)
        else {
            return;
        };
        let now = self.now;
        let node = self.nodes.get_mut(&display).expect("display node");
        let state = node.device.as_mut().expect("device");
        if state.online {
            let events = monitor_census(state, &self.pan, now, threshold);
            for ev in events {
                self.record(LogEntry::MonitorEvent(ev));
            }
        }
        self.schedule(now + threshold, display, Event::Census);
    }

    fn on_traffic(&mut self, addr: u16) {
        let Some(spec) = self.nodes.get(&addr).and_then(|n| n.traffic) else {
            return;
        };
        if !self.nodes[&addr].online() {
            return;
        }
        self.generate_traffic(addr);
        if let (false, Some(period)) = (spec.saturate, spec.period_us) {
            let gap = match spec.arrival {
                Arrival::Periodic => period,
                Arrival::Poisson => {
                    let u = self.nodes.get_mut(&addr).expect("known node").traffic_rng.unit();
                    ((-(1.0 - u).ln() * period as f64).round() as Micros).max(1)
                }
            };
            self.schedule(self.now + gap, addr, Event::Traffic(addr));
        }
    }

    fn generate_traffic(&mut self, addr: u16) {
        let node = self.nodes.get_mut(&addr).expect("known node");
        let Some(spec) = node.traffic else {
            return;
        };
        let seq = node.mac.next_seq();
        let mut payload = Vec::with_capacity(spec.payload_octets);
        if spec.payload_octets > 0 {
            payload.push(0x01);
            payload.resize(spec.payload_octets, b'.');
        }
        let frame = Frame::data(seq, self.pan.pan_id(), spec.dest, addr, payload);
        let out = Outgoing {
            psdu: frame.encode().expect("traffic size validated"),
            seq,
            dest: spec.dest,
            ack: spec.ack && spec.dest != BROADCAST,
            submission: None,
            injected: false,
        };
        self.enqueue(addr, out);
    }

    // ---- reception ----

    fn on_tx_end(&mut self, id: TxId) {
        let Some(tx) = self.medium.get(id).cloned() else {
            return;
        };
        let listeners: Vec<(u16, &mut StreamRng)> = self
            .nodes
            .iter_mut()
            .filter(|(a, n)| **a != tx.tx_node && n.device.is_some() && n.online())
            .map(|(a, n)| (*a, &mut n.rng))
            .collect();
        let outcomes = self.medium.broadcast(id, listeners);
        for o in &outcomes {
            self.record(LogEntry::Rx(RxRecord {
                tx_id: id,
                node: o.rx_node,
                status: o.status,
                lqi: o.lqi,
            }));
        }

        // Sender side.
        let sender = self.nodes.get_mut(&tx.tx_node).expect("sender");
        if let Some(inflight) = sender.mac.inflight.as_mut() {
            if inflight.phase == Phase::OnAir(id) {
                if inflight.out.ack {
                    inflight.phase = Phase::AwaitAck;
                    sender.mac.token += 1;
                    let token = sender.mac.token;
                    let at = self.now + self.timing.ack_wait;
                    self.schedule(
                        at,
                        tx.tx_node,
                        Event::AckTimeout {
                            node: tx.tx_node,
                            token,
                        },
                    );
                } else {
                    self.finish(tx.tx_node, Delivery::Delivered);
                }
            }
        }

        // Receivers in address order; the monitor also logs its own frames.
        let mut outcomes = outcomes.into_iter().peekable();
        let addrs: Vec<u16> = self.nodes.keys().copied().collect();
        for addr in addrs {
            if addr == tx.tx_node {
                if Some(addr) == self.display && self.nodes[&addr].online() {
                    let frame = Frame::decode(&tx.psdu);
                    self.monitor_tap(addr, id, &tx.psdu, frame.as_ref().map_err(|e| e.name()), false);
                }
                continue;
            }
            if outcomes.peek().is_some_and(|o| o.rx_node == addr) {
                let o = outcomes.next().expect("peeked");
                self.receive(o, id);
            }
        }
    }

    fn receive(&mut self, o: ReceptionOutcome, id: TxId) {
        let addr = o.rx_node;
        let decoded = match o.status {
            RxStatus::Collided => Err("COLLIDED"),
            _ => Frame::decode(&o.psdu).map_err(|e| e.name()),
        };
        let delivered = match &decoded {
            Ok(f) => self.mac_receive(addr, f),
            Err(_) => false,
        };
        if Some(addr) == self.display {
            self.monitor_tap(addr, id, &o.psdu, decoded.as_ref().map_err(|e| *e), delivered);
            return;
        }
        let Ok(frame) = decoded else {
            return;
        };
        if !delivered {
            return;
        }
        let pan_id = self.pan.pan_id();
        let node = self.nodes.get_mut(&addr).expect("listener");
        let state = node.device.as_mut().expect("device");
        match state.role {
            Role::Actuator => {
                let outcome = actuator_on_frame(state, &frame, pan_id);
                for change in outcome.changes {
                    self.record(LogEntry::DeviceState(DeviceStateRecord {
                        node: addr,
                        change,
                        tx_id: id,
                    }));
                }
                if let Some(reason) = outcome.discarded {
                    self.log_mac(
                        addr,
                        MacEvent::Discarded {
                            src: frame.src,
                            seq: frame.seq,
                            reason,
                        },
                    );
                }
                if let Some(body) = outcome.reply {
                    self.reply(addr, frame.src, &body);
                }
            }
            Role::Coordinator => {
                if frame.frame_type != FrameType::Beacon {
                    self.log_mac(
                        addr,
                        MacEvent::Received {
                            src: frame.src,
                            seq: frame.seq,
                            summary: describe_frame(&frame),
                        },
                    );
                }
            }
            Role::DisplayMonitor => {}
        }
    }

    fn reply(&mut self, from: u16, to: u16, body: &InstructionBody) {
        let Ok(payload) = encode_payload(body) else {
            return;
        };
        let node = self.nodes.get_mut(&from).expect("replying node");
        let seq = node.mac.next_seq();
        let frame = Frame::data(seq, self.pan.pan_id(), to, from, payload);
        let out = Outgoing {
            psdu: frame.encode().expect("reply fits"),
            seq,
            dest: to,
            ack: true,
            submission: None,
            injected: false,
        };
        self.enqueue(from, out);
    }

    /// MAC filtering for one valid frame. Returns whether the frame is new and
    /// addressed to this node (or broadcast) on its own PAN.
    fn mac_receive(&mut self, addr: u16, f: &Frame) -> bool {
        if f.pan_id != self.pan.pan_id() || (f.dest != addr && f.dest != BROADCAST) {
            return false;
        }
        let node = self.nodes.get_mut(&addr).expect("listener");
        if !node.device.as_ref().is_some_and(|d| d.associated) {
            return false;
        }
        match f.frame_type {
            FrameType::Ack => {
                let matched =
                    node.mac.inflight.as_ref().is_some_and(|i| {
                        i.phase == Phase::AwaitAck && i.out.seq == f.seq && i.out.dest == f.src
                    });
                if matched {
                    self.finish(addr, Delivery::Delivered);
                }
                false
            }
            FrameType::Beacon => f.src == COORDINATOR_ADDR,
            FrameType::Data | FrameType::MacCommand => {
                if !self.pan.is_participant(f.src) {
                    self.log_mac(
                        addr,
                        MacEvent::Discarded {
                            src: f.src,
                            seq: f.seq,
                            reason: "unknown source".into(),
                        },
                    );
                    return false;
                }
                if f.dest == addr {
                    let at = self.now + self.timing.turnaround;
                    self.schedule(
                        at,
                        addr,
                        Event::SendAck {
                            node: addr,
                            ack: Frame::ack_for(f),
                        },
                    );
                }
                self.pan.touch(f.src, self.now);
                let node = self.nodes.get_mut(&addr).expect("listener");
                if node.mac.last_rx.get(&f.src) == Some(&f.seq) {
                    self.log_mac(
                        addr,
                        MacEvent::Duplicate {
                            src: f.src,
                            seq: f.seq,
                        },
                    );
                    return false;
                }
                node.mac.last_rx.insert(f.src, f.seq);
                true
            }
        }
    }

    fn monitor_tap(
        &mut self,
        addr: u16,
        id: TxId,
        raw: &[u8],
        decoded: Result<&Frame, &str>,
        delivered: bool,
    ) {
        let now = self.now;
        let heard = match decoded {
            Ok(frame) => Heard::Frame { frame, raw },
            Err(reason) => Heard::Corrupt { raw, reason },
        };
        let node = self.nodes.get_mut(&addr).expect("monitor");
        let state = node.device.as_mut().expect("device");
        let events = display_on_frame(state, heard, now, Some(id), &self.pan, delivered);
        for ev in events {
            self.record(LogEntry::MonitorEvent(ev));
        }
    }
}

/// Counts reported by `run`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub records: usize,
    pub end_at: Micros,
    pub tx_frames: usize,
    pub rx_ok: usize,
    pub rx_collided: usize,
    pub rx_noise_corrupted: usize,
    pub delivered: usize,
    pub no_ack: usize,
    pub channel_access_failures: usize,
    pub texts_delivered: usize,
    pub commands_applied: usize,
    pub intrusions: usize,
    pub corrupt_frames: usize,
    pub silent_alerts: usize,
    pub stimulus_errors: usize,
    /// Actuator endpoint levels at the end, as `(node, endpoint, level)`.
    pub endpoints: Vec<(u16, u8, u8)>,
    /// Display contents at the end, oldest first.
    pub display: Vec<String>,
}

impl RunSummary {
    pub fn new(out: &RunOutput) -> Self {
        let mut s = RunSummary {
            records: out.records.len(),
            end_at: out.records.last().map_or(0, |r| r.at),
            ..Default::default()
        };
        for r in &out.records {
            match &r.entry {
                LogEntry::Tx(_) => s.tx_frames += 1,
                LogEntry::Rx(rx) => match rx.status {
                    RxStatus::Ok => s.rx_ok += 1,
                    RxStatus::Collided => s.rx_collided += 1,
                    RxStatus::NoiseCorrupted => s.rx_noise_corrupted += 1,
                },
                LogEntry::MacEvent(m) => {
                    if let MacEvent::SendDone { result, .. } = m.event {
                        match result {
                            Delivery::Delivered => s.delivered += 1,
                            Delivery::NoAck => s.no_ack += 1,
                            Delivery::ChannelAccessFailure => s.channel_access_failures += 1,
                        }
                    }
                }
                LogEntry::MonitorEvent(ev) => match ev.category {
                    MonitorCategory::TextShown => s.texts_delivered += 1,
                    MonitorCategory::FrameCorrupt => s.corrupt_frames += 1,
                    MonitorCategory::NodeSilent => s.silent_alerts += 1,
                    c if c.is_intrusion() => s.intrusions += 1,
                    _ => {}
                },
                LogEntry::DeviceState(_) => s.commands_applied += 1,
                LogEntry::Stimulus(st) => {
                    if st.error.is_some() {
                        s.stimulus_errors += 1;
                    }
                }
            }
        }
        for n in &out.nodes {
            for (ep, level) in &n.endpoints {
                s.endpoints.push((n.addr, *ep, *level));
            }
            if n.role == Role::DisplayMonitor {
                s.display = n.display_buffer.iter().cloned().collect();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    fn scenario(extra: &str, nodes: &str) -> Scenario {
        let doc = format!(
            r#"{{"pan_id": 1, "duration_us": 1000000, {extra} "nodes": [{{"role": "COORDINATOR"}}, {nodes}]}}"#
        );
        load_scenario(&doc).unwrap()
    }

    fn actuator_and_display() -> &'static str {
        r#"{"role": "ACTUATOR", "addr": 1}, {"role": "DISPLAY_MONITOR", "addr": 9}"#
    }

    #[test]
    fn first_record_is_association() {
        let mut e = Engine::new(scenario("", actuator_and_display()));
        let r = e.step().unwrap();
        assert_eq!(r.index, 1);
        assert_eq!(r.at, 0);
        assert!(matches!(
            r.entry,
            LogEntry::MacEvent(MacEventRecord { node: 0, .. })
        ));
    }

    #[test]
    fn step_to_completion_equals_run() {
        let s = scenario(
            r#""script": [{"at_us": 0, "typed_input": "*1*1*1#"}, {"at_us": 5000, "message": {"text": "Hi"}}],"#,
            actuator_and_display(),
        );
        let run = Engine::new(s.clone()).run();
        let mut e = Engine::new(s);
        let mut stepped = Vec::new();
        while let Some(r) = e.step() {
            stepped.push(r);
        }
        assert_eq!(stepped, run.records);
        assert!(e.step().is_none());
        assert!(e.step().is_none());
    }

    #[test]
    fn beacon_count_matches_schedule() {
        let out = Engine::new(scenario("", actuator_and_display())).run();
        let beacons = out
            .records
            .iter()
            .filter(|r| {
                matches!(&r.entry, LogEntry::Tx(t)
                    if t.frame.is_some_and(|f| f.frame_type == FrameType::Beacon))
            })
            .count();
        assert_eq!(beacons, 1);
        let mut s = scenario("", actuator_and_display());
        s.duration_us = 5_000_000;
        let out = Engine::new(s).run();
        let beacons = out
            .records
            .iter()
            .filter(|r| matches!(&r.entry, LogEntry::Tx(t) if t.node == 0))
            .count();
        assert_eq!(beacons, 5);
    }

    #[test]
    fn typed_command_turns_actuator_on() {
        let s = scenario(
            r#""script": [{"at_us": 0, "typed_input": "*1*1*1#"}],"#,
            actuator_and_display(),
        );
        let out = Engine::new(s).run();
        let act = out.nodes.iter().find(|n| n.addr == 1).unwrap();
        assert_eq!(act.endpoints[&1], 255);
        let summary = RunSummary::new(&out);
        assert_eq!(summary.delivered, 1);
        assert_eq!(summary.commands_applied, 1);
    }

    #[test]
    fn text_message_is_displayed_once() {
        let s = scenario(
            r#""script": [{"at_us": 0, "message": {"text": "Hi"}}],"#,
            actuator_and_display(),
        );
        let out = Engine::new(s).run();
        let summary = RunSummary::new(&out);
        assert_eq!(summary.texts_delivered, 1);
        assert_eq!(summary.display, vec!["Hi".to_string()]);
    }

    #[test]
    fn unknown_destination_is_rejected() {
        let mut e = Engine::new(scenario("", actuator_and_display()));
        let err = e.submit(
            Instruction::control(200, 1, crate::command::Action::On),
            StimulusSource::Typed,
            None,
        );
        assert_eq!(err, Err(SubmitError::DestinationUnknown(200)));
    }

    #[test]
    fn sequence_numbers_increment() {
        let mut e = Engine::new(scenario("", actuator_and_display()));
        let a = e.submit_input("*1*1*1#").unwrap().1;
        let b = e.submit_input("*1*1*0#").unwrap().1;
        assert_eq!(b.seq, a.seq.wrapping_add(1));
        assert_eq!(a.seq, 0);
    }

    #[test]
    fn dropped_node_gets_no_ack() {
        let s = scenario(
            r#""script": [{"at_us": 0, "drop_node": 1}, {"at_us": 10, "typed_input": "*1*1*1#"}],"#,
            actuator_and_display(),
        );
        let out = Engine::new(s).run();
        let summary = RunSummary::new(&out);
        assert_eq!(summary.no_ack, 1);
        assert_eq!(summary.endpoints, vec![(1, 1, 0), (1, 2, 0)]);
    }

    #[test]
    fn query_reply_reaches_coordinator() {
        let s = scenario(
            r#""beacons": {"enabled": false}, "script": [{"at_us": 0, "typed_input": "*1*1*9#"}],"#,
            actuator_and_display(),
        );
        let out = Engine::new(s).run();
        let got = out.records.iter().any(|r| {
            matches!(&r.entry, LogEntry::MacEvent(MacEventRecord { node: 0, event: MacEvent::Received { src: 1, summary, .. } })
                if summary.contains("EP1=0"))
        });
        assert!(got);
        assert_eq!(RunSummary::new(&out).delivered, 2);
    }

    #[test]
    fn injected_foreign_frame_is_flagged_not_applied() {
        let frame = Frame::data(
            7,
            0xBEEF,
            1,
            0,
            encode_payload(&InstructionBody::Control {
                endpoint: 1,
                action: crate::command::Action::On,
            })
            .unwrap(),
        );
        let hex = hex::encode(frame.encode().unwrap());
        let s = scenario(
            &format!(r#""script": [{{"at_us": 0, "inject_raw_frame": {{"hex": "{hex}"}}}}],"#),
            actuator_and_display(),
        );
        let out = Engine::new(s).run();
        let s = RunSummary::new(&out);
        assert_eq!(s.intrusions, 1);
        assert_eq!(s.commands_applied, 0);
    }

    #[test]
    fn poisson_traffic_has_random_gaps_with_the_right_mean() {
        let nodes = r#"{"role": "ACTUATOR", "addr": 1,
            "traffic": {"dest": 0, "payload_octets": 4, "period_us": 10000, "ack": false, "arrival": "POISSON"}}"#;
        let s = scenario(r#""beacons": {"enabled": false},"#, nodes);
        let starts: Vec<Micros> = Engine::new(s.clone())
            .run()
            .records
            .iter()
            .filter_map(|r| match &r.entry {
                LogEntry::Tx(tx) if tx.node == 1 => Some(r.at),
                _ => None,
            })
            .collect();
        assert!((70..=130).contains(&starts.len()), "{} frames", starts.len());
        let gaps: std::collections::BTreeSet<Micros> = starts.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.len() > starts.len() / 2);
        assert_eq!(Engine::new(s.clone()).run().records, Engine::new(s).run().records);
    }
}
