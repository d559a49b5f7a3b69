use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};

use monitomation_core::command::LookupTable;
use monitomation_core::dtmf::{self, DetectorConfig, DtmfError};
use monitomation_core::log::{read_jsonl, write_jsonl, ReadLogError};
use monitomation_core::{
    classify_and_parse, load_scenario_file, verify_log as check, Engine, RunSummary, ScenarioError,
};
use serde_json::json;

use crate::{DtmfArgs, Failure, RunArgs, VerifyArgs};

pub fn scenario_failure(e: ScenarioError) -> Failure {
    match e {
        ScenarioError::Io(_) => Failure::Io(e.to_string()),
        _ => Failure::Invalid(e.to_string()),
    }
}

pub fn run(a: &RunArgs) -> Result<(), Failure> {
    let mut scenario = load_scenario_file(&a.scenario).map_err(scenario_failure)?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    let header = scenario.to_string();
    let out = Engine::new(scenario).run();
    if let Some(path) = &a.out {
        let io_err = |e: io::Error| Failure::Io(format!("{}: {e}", path.display()));
        let file = File::create(path).map_err(io_err)?;
        write_jsonl(BufWriter::new(file), &out.records).map_err(io_err)?;
    }
    let summary = RunSummary::new(&out);
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        );
    } else {
        print_summary(&header, &summary);
    }
    Ok(())
}

fn print_summary(header: &str, s: &RunSummary) {
    let mut o = io::stdout().lock();
    let _ = writeln!(o, "scenario: {header}");
    let _ = writeln!(o, "records: {} (last at {} us)", s.records, s.end_at);
    let _ = writeln!(
        o,
        "frames: {} TX, {} RX ok, {} collided, {} noise-corrupted",
        s.tx_frames, s.rx_ok, s.rx_collided, s.rx_noise_corrupted
    );
    let _ = writeln!(
        o,
        "sends: {} delivered, {} no ack, {} channel access failures",
        s.delivered, s.no_ack, s.channel_access_failures
    );
    let _ = writeln!(o, "texts delivered: {}", s.texts_delivered);
    let _ = writeln!(o, "commands applied: {}", s.commands_applied);
    let _ = writeln!(
        o,
        "intrusions: {}, corrupt frames: {}, silent-node alerts: {}",
        s.intrusions, s.corrupt_frames, s.silent_alerts
    );
    let _ = writeln!(o, "stimulus errors: {}", s.stimulus_errors);
    if !s.endpoints.is_empty() {
        let eps: Vec<String> = s
            .endpoints
            .iter()
            .map(|(n, ep, level)| format!("{n}/{ep}={level}"))
            .collect();
        let _ = writeln!(o, "endpoints: {}", eps.join(" "));
    }
    if !s.display.is_empty() {
        let _ = writeln!(o, "display: {:?}", s.display);
    }
}

fn dtmf_failure(e: DtmfError) -> Failure {
    match e {
        DtmfError::Io(_) => Failure::Io(e.to_string()),
        _ => Failure::Invalid(e.to_string()),
    }
}

pub fn dtmf_decode(a: &DtmfArgs) -> Result<(), Failure> {
    let (samples, rate) = dtmf::read_wav(&a.wav).map_err(dtmf_failure)?;
    let events = dtmf::decode_key_sequence(&samples, rate, &DetectorConfig::for_sample_rate(rate))
        .map_err(dtmf_failure)?;
    let keys = dtmf::keys_to_string(&events);
    if keys.is_empty() {
        if a.json {
            println!("{}", json!({"keys": ""}));
        }
        return Ok(());
    }
    let parsed = classify_and_parse(&keys, &LookupTable::with_defaults(0));
    let result = match &parsed {
        Ok(instr) => serde_json::to_string(instr).expect("instruction serializes"),
        Err(e) => json!({"error": e.name(), "message": e.to_string()}).to_string(),
    };
    if a.json {
        println!("{{\"keys\":{},\"instruction\":{result}}}", json!(keys));
    } else {
        println!("{keys}");
        println!("{result}");
    }
    parsed.map(|_| ()).map_err(|e| Failure::Invalid(e.to_string()))
}

pub fn verify_log(a: &VerifyArgs) -> Result<(), Failure> {
    let file = File::open(&a.log).map_err(|e| Failure::Io(format!("{}: {e}", a.log.display())))?;
    let records = read_jsonl(BufReader::new(file)).map_err(|e| match e {
        ReadLogError::Io(_) => Failure::Io(e.to_string()),
        ReadLogError::Parse { .. } => Failure::Invalid(e.to_string()),
    })?;
    check(&records).map_err(|v| Failure::Invalid(v.to_string()))?;
    println!("ok: {} records", records.len());
    Ok(())
}
