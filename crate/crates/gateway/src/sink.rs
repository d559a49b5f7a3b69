//! Append-only JSON-lines persistence of log records.

use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use monitomation_core::log::{read_jsonl, ReadLogError};
use monitomation_core::LogRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FsyncPolicy {
    /// `fsync` after every batch of records.
    Always,
    /// Leave flushing to the OS.
    #[default]
    Never,
}

impl FromStr for FsyncPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "always" => Ok(FsyncPolicy::Always),
            "never" => Ok(FsyncPolicy::Never),
            other => Err(format!(
                "unknown fsync policy {other:?}, expected always or never"
            )),
        }
    }
}

/// Writes records as lines; line `n` holds the record with index `n`.
///
/// Lines that fail to reach the file are kept and retried ahead of the next
/// batch, so the file never skips an offset.
#[derive(Debug)]
pub struct LogSink {
    file: Option<(PathBuf, File)>,
    fsync: FsyncPolicy,
    backlog: Vec<u8>,
}

impl LogSink {
    /// A sink that keeps nothing on disk.
    pub fn memory() -> Self {
        Self {
            file: None,
            fsync: FsyncPolicy::Never,
            backlog: Vec::new(),
        }
    }

    /// Opens `path` for appending and returns the records already in it.
    pub fn open(path: &Path, fsync: FsyncPolicy) -> Result<(Self, Vec<LogRecord>), ReadLogError> {
        let history = match std::fs::metadata(path) {
            Ok(m) if m.is_file() => read_jsonl(BufReader::new(File::open(path)?))?,
            _ => Vec::new(),
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let sink = Self {
            file: Some((path.to_path_buf(), file)),
            fsync,
            backlog: Vec::new(),
        };
        Ok((sink, history))
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    /// Appends `records`; on error they stay queued for the next call.
    pub fn append(&mut self, records: &[LogRecord]) -> io::Result<()> {
        let Some((_, file)) = self.file.as_mut() else {
            return Ok(());
        };
        for r in records {
            self.backlog.extend_from_slice(r.to_json().as_bytes());
            self.backlog.push(b'\n');
        }
        if self.backlog.is_empty() {
            return Ok(());
        }
        let before = file.metadata().map(|m| m.len()).ok();
        let written = file.write_all(&self.backlog).and_then(|_| match self.fsync {
            FsyncPolicy::Always => file.sync_data(),
            FsyncPolicy::Never => Ok(()),
        });
        match written {
            Ok(()) => {
                self.backlog.clear();
                Ok(())
            }
            Err(e) => {
                // Drop any partial line so a retry starts on a line boundary.
                if let Some(len) = before {
                    let _ = file.set_len(len);
                }
                Err(e)
            }
        }
    }

    pub fn has_backlog(&self) -> bool {
        !self.backlog.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use monitomation_core::{load_scenario, Engine};

    fn records() -> Vec<LogRecord> {
        let s = load_scenario(
            r#"{"pan_id": 1, "duration_us": 100000, "nodes": [{"role": "COORDINATOR"}, {"role": "ACTUATOR", "addr": 1}]}"#,
        )
        .unwrap();
        Engine::new(s).run().records
    }

    #[test]
    fn line_n_is_record_n() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let recs = records();
        let (mut sink, history) = LogSink::open(&path, FsyncPolicy::Always).unwrap();
        assert!(history.is_empty());
        sink.append(&recs[..2]).unwrap();
        sink.append(&recs[2..]).unwrap();
        drop(sink);
        let (_, back) = LogSink::open(&path, FsyncPolicy::Never).unwrap();
        assert_eq!(back, recs);
        for (n, r) in back.iter().enumerate() {
            assert_eq!(r.index, n as u64 + 1);
        }
    }

    #[test]
    fn failed_write_is_retried() {
        let Ok((mut sink, _)) = LogSink::open(Path::new("/dev/full"), FsyncPolicy::Never) else {
            return;
        };
        assert!(sink.append(&records()).is_err());
        assert!(sink.has_backlog());
    }

    #[test]
    fn fsync_policy_parses() {
        assert_eq!("always".parse::<FsyncPolicy>(), Ok(FsyncPolicy::Always));
        assert!("sometimes".parse::<FsyncPolicy>().is_err());
    }
}
