//! Thin HTTP clients for `send` and `events`.

use std::io::{BufRead, BufReader, Write};

use base64::Engine as _;
use monitomation_core::{dtmf, LogRecord};
use reqwest::blocking::{Client, Response};
use serde_json::{json, Value};

use crate::{EventsArgs, Failure, SendArgs};

fn api(gateway: &str, path: &str) -> String {
    format!("{}/api/v1{path}", gateway.trim_end_matches('/'))
}

fn transport(e: reqwest::Error) -> Failure {
    Failure::Io(format!("gateway unreachable: {e}"))
}

/// 4xx answers are the caller's fault (exit 2); 5xx are runtime failures.
fn check(resp: Response) -> Result<Value, Failure> {
    let status = resp.status();
    let body: Value = resp.json().unwrap_or(Value::Null);
    if status.is_success() {
        return Ok(body);
    }
    let msg = format!("{status}: {body}");
    if status.is_client_error() {
        Err(Failure::Invalid(msg))
    } else {
        Err(Failure::Io(msg))
    }
}

pub fn send(a: &SendArgs) -> Result<(), Failure> {
    let (path, body) = if let Some(text) = &a.text {
        ("/messages", json!({"to": a.to, "text": text}))
    } else if let Some(input) = &a.input {
        ("/commands", json!({"input": input}))
    } else if let Some(wav) = &a.wav {
        let (samples, rate) = dtmf::read_wav(wav).map_err(|e| match e {
            dtmf::DtmfError::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        })?;
        let pcm = dtmf::samples_to_pcm16_le(&samples);
        let b64 = base64::engine::general_purpose::STANDARD.encode(pcm);
        ("/dtmf", json!({"sample_rate": rate, "pcm16_base64": b64}))
    } else {
        return Err(Failure::Usage("one of --text, --input, --wav is required".into()));
    };
    let resp = Client::new()
        .post(api(&a.gateway, path))
        .json(&body)
        .send()
        .map_err(transport)?;
    println!("{}", check(resp)?);
    Ok(())
}

pub fn events(a: &EventsArgs) -> Result<(), Failure> {
    let client = Client::builder().timeout(None).build().map_err(transport)?;
    let mut out = std::io::stdout().lock();
    if a.follow {
        let resp = client
            .get(api(&a.gateway, "/events/stream"))
            .header("Last-Event-ID", a.after.to_string())
            .send()
            .map_err(transport)?;
        if !resp.status().is_success() {
            return check(resp).map(|_| ());
        }
        for line in BufReader::new(resp).lines() {
            let line = line.map_err(|e| Failure::Io(e.to_string()))?;
            if let Some(data) = line.strip_prefix("data:") {
                if writeln!(out, "{}", data.trim_start()).is_err() {
                    return Ok(());
                }
            }
        }
        return Ok(());
    }
    let mut after = a.after;
    loop {
        let resp = client
            .get(api(&a.gateway, "/events"))
            .query(&[("after", after)])
            .send()
            .map_err(transport)?;
        let page = check(resp)?;
        let records: Vec<LogRecord> = serde_json::from_value(page["records"].clone())
            .map_err(|e| Failure::Io(format!("unexpected page from gateway: {e}")))?;
        let Some(last) = records.last() else {
            return Ok(());
        };
        after = last.index;
        for r in &records {
            if writeln!(out, "{}", r.to_json()).is_err() {
                return Ok(());
            }
        }
    }
}
