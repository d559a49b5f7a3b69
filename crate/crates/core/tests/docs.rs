//! Keeps the published documents in step with the code.

use std::collections::BTreeSet;
use std::path::PathBuf;

use monitomation_core::command::TableEntry;
use monitomation_core::scenario::{
    BeaconsConfig, DtmfDoc, InjectDoc, MacDoc, MessageDoc, MonitorConfig, ScenarioDoc, SerialDoc,
};
use monitomation_core::{Frame, FrameType};
use serde::Serialize;
use serde_json::Value;

fn doc(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../docs")
        .join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn parse_u16(s: &str) -> u16 {
    match s.strip_prefix("0x") {
        Some(h) => u16::from_str_radix(h, 16).unwrap(),
        None => s.parse().unwrap(),
    }
}

#[test]
fn protocol_vectors_decode_and_reencode() {
    let text = doc("protocol.md");
    let section = text.split("## Golden vectors").nth(1).expect("vector section");
    let mut n = 0;
    for line in section.lines().filter(|l| l.starts_with('|')) {
        let cells: Vec<&str> = line
            .trim_matches('|')
            .split('|')
            .map(|c| c.trim().trim_matches('`'))
            .collect();
        if cells[0] == "Name" || cells[0].starts_with('-') {
            continue;
        }
        let raw = hex::decode(cells[7]).unwrap();
        let f = Frame::decode(&raw).unwrap_or_else(|e| panic!("{}: {e}", cells[0]));
        let ty = match cells[1] {
            "BEACON" => FrameType::Beacon,
            "DATA" => FrameType::Data,
            "ACK" => FrameType::Ack,
            other => panic!("type {other}"),
        };
        assert_eq!(f.frame_type, ty, "{}", cells[0]);
        assert_eq!(f.seq, cells[2].parse::<u8>().unwrap(), "{}", cells[0]);
        assert_eq!(f.pan_id, parse_u16(cells[3]), "{}", cells[0]);
        assert_eq!(f.dest, parse_u16(cells[4]), "{}", cells[0]);
        assert_eq!(f.src, parse_u16(cells[5]), "{}", cells[0]);
        assert_eq!(f.payload, hex::decode(cells[6]).unwrap(), "{}", cells[0]);
        assert_eq!(f.encode().unwrap(), raw, "{}", cells[0]);
        n += 1;
    }
    assert_eq!(n, 7);
}

fn keys<T: Serialize>(v: &T) -> BTreeSet<String> {
    match serde_json::to_value(v).unwrap() {
        Value::Object(m) => m.keys().cloned().collect(),
        other => panic!("not an object: {other}"),
    }
}

fn schema_keys(schema: &Value, pointer: &str) -> BTreeSet<String> {
    schema
        .pointer(pointer)
        .and_then(Value::as_object)
        .unwrap_or_else(|| panic!("{pointer} missing"))
        .keys()
        .cloned()
        .collect()
}

#[test]
fn scenario_schema_lists_every_field() {
    let schema: Value = serde_json::from_str(&doc("scenario.schema.json")).unwrap();
    let demo = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/full_demo.json"
    ))
    .unwrap();
    let d: ScenarioDoc = serde_json::from_str(&demo).unwrap();

    assert_eq!(keys(&d), schema_keys(&schema, "/properties"));
    let traffic = d.nodes.iter().find_map(|n| n.traffic).unwrap();
    assert_eq!(keys(&traffic), schema_keys(&schema, "/$defs/traffic/properties"));
    assert_eq!(keys(&d.nodes[0]), schema_keys(&schema, "/$defs/node/properties"));

    let mac: MacDoc = serde_json::from_str("{}").unwrap();
    assert_eq!(keys(&mac), schema_keys(&schema, "/$defs/mac/properties"));
    assert_eq!(
        keys(&BeaconsConfig::default()),
        schema_keys(&schema, "/properties/beacons/properties")
    );
    assert_eq!(
        keys(&SerialDoc::default()),
        schema_keys(&schema, "/properties/serial/properties")
    );
    assert_eq!(
        keys(&MonitorConfig::default()),
        schema_keys(&schema, "/properties/monitor/properties")
    );
    let entry = TableEntry {
        pattern: "x".into(),
        dest: 1,
        endpoint: 1,
        action: "ON".into(),
        level: None,
    };
    assert_eq!(
        keys(&entry),
        schema_keys(&schema, "/$defs/table_entry/properties")
    );

    let stim = "/$defs/script_entry/properties";
    let msg: MessageDoc = serde_json::from_str(r#"{"text": "x"}"#).unwrap();
    assert_eq!(
        keys(&msg),
        schema_keys(&schema, &format!("{stim}/message/properties"))
    );
    let dtmf: DtmfDoc = serde_json::from_str("{}").unwrap();
    assert_eq!(
        keys(&dtmf),
        schema_keys(&schema, &format!("{stim}/dtmf_audio/properties"))
    );
    let inj: InjectDoc = serde_json::from_str(r#"{"hex": "00"}"#).unwrap();
    assert_eq!(
        keys(&inj),
        schema_keys(&schema, &format!("{stim}/inject_raw_frame/properties"))
    );

    let mut script_keys = BTreeSet::new();
    for s in &d.script {
        script_keys.extend(keys(s));
    }
    assert_eq!(script_keys, schema_keys(&schema, stim));
}

#[test]
fn log_samples_come_from_golden_logs() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut golden = BTreeSet::new();
    for name in ["hello.log.jsonl", "full_demo.log.jsonl"] {
        let text = std::fs::read_to_string(root.join(name)).unwrap();
        golden.extend(text.lines().map(str::to_owned));
    }
    let text = doc("log-format.md");
    let samples: Vec<&str> = text
        .lines()
        .filter(|l| {
            l.strip_prefix("{\"index\":")
                .is_some_and(|r| r.starts_with(|c: char| c.is_ascii_digit()))
        })
        .collect();
    assert!(samples.len() >= 18, "{} samples", samples.len());
    for s in samples {
        assert!(golden.contains(s), "not in any golden log: {s}");
        let r: monitomation_core::LogRecord = serde_json::from_str(s).unwrap();
        assert_eq!(r.to_json(), s);
    }
}
