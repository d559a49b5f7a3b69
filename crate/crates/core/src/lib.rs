//! Simulated IEEE 802.15.4 monitoring, messaging and automation network.
//!
//! The crate holds every algorithm: PHY timing and the shared medium, the MAC
//! (frame codec, CSMA-CA, PAN membership, beacons), instruction codecs, DTMF
//! decoding, device roles, the serial hop and the discrete-event engine.

pub mod command;
pub mod device;
pub mod dtmf;
pub mod engine;
pub mod log;
pub mod mac;
pub mod phy;
pub mod rng;
pub mod scenario;
pub mod serial;
pub mod verify;

/// Simulated time in integer microseconds.
pub type Micros = u64;

pub use command::{classify_and_parse, Action, CommandError, Instruction, InstructionBody, LookupTable};
pub use device::{MonitorCategory, MonitorEvent, NodeRef, NodeState, Role};
pub use dtmf::DtmfError;
pub use engine::{DtmfOutcome, Engine, Receipt, RunOutput, RunSummary, SubmissionStatus, SubmitError};
pub use log::{LogEntry, LogRecord};
pub use mac::{Delivery, Frame, FrameError, FrameType};
pub use phy::{BandConfig, BandId};
pub use scenario::{load_scenario, load_scenario_file, Scenario, ScenarioError, ValidationError};
pub use serial::{BaudOutOfRange, SerialLinkConfig};
pub use verify::{verify_log, Violation};
