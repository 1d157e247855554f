//! Append-only JSON-lines event log.
//!
//! ```text
//! {"seq":1,"ts":1700000000,"kind":"account_opened","payload":{...}}
//! ```

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::SealKey;
use crate::protocol::{LedgerError, LedgerEvent, LedgerState, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub ts: u64,
    #[serde(flatten)]
    pub event: LedgerEvent,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {line}: {reason} (last good seq: {})", last_good_seq.map_or("none".to_string(), |s| s.to_string()))]
    Corrupt { line: usize, last_good_seq: Option<u64>, reason: String },
    #[error("seq {seq}: {source}")]
    Apply { seq: u64, source: LedgerError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Default)]
struct Inner {
    next_seq: u64,
    lines: Vec<String>,
    sink: Option<BufWriter<File>>,
}

/// Single-writer log. Appends are serialized by an internal lock and each
/// line is flushed before `append` returns.
#[derive(Default)]
pub struct EventLog {
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog").field("len", &self.len()).finish()
    }
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self { inner: Mutex::new(Inner { next_seq: 1, ..Inner::default() }) }
    }

    /// Creates a new log file, failing if one already exists.
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().write(true).create_new(true).open(path)?;
        Ok(Self { inner: Mutex::new(Inner { next_seq: 1, lines: Vec::new(), sink: Some(BufWriter::new(file)) }) })
    }

    /// Opens an existing log for appending and returns its records.
    pub fn open_append(path: impl AsRef<Path>) -> Result<(Self, Vec<EventRecord>), ReplayError> {
        let text = std::fs::read_to_string(&path)?;
        let records = parse_log(&text)?;
        let file = OpenOptions::new().append(true).open(&path)?;
        let inner = Inner {
            next_seq: records.last().map_or(1, |r| r.seq + 1),
            lines: text.lines().filter(|l| !l.trim().is_empty()).map(str::to_owned).collect(),
            sink: Some(BufWriter::new(file)),
        };
        Ok((Self { inner: Mutex::new(inner) }, records))
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn append(&self, ts: u64, event: &LedgerEvent) -> std::io::Result<u64> {
        let mut inner = self.lock();
        let seq = inner.next_seq.max(1);
        let line = serde_json::to_string(&EventRecord { seq, ts, event: event.clone() }).map_err(std::io::Error::other)?;
        if let Some(sink) = inner.sink.as_mut() {
            sink.write_all(line.as_bytes())?;
            sink.write_all(b"\n")?;
            sink.flush()?;
        }
        inner.lines.push(line);
        inner.next_seq = seq + 1;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.lock().lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lines(&self) -> Vec<String> {
        self.lock().lines.clone()
    }

    pub fn text(&self) -> String {
        let mut s = self.lock().lines.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }

    pub fn records(&self) -> Vec<EventRecord> {
        self.lock().lines.iter().map(|l| serde_json::from_str(l).expect("log lines are well formed")).collect()
    }

    /// SHA-256 of the log text exactly as written.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.text().as_bytes()))
    }

    /// SHA-256 of the events ordered by (time, session, phase), ignoring
    /// sequence numbers, so interleaving of independent sessions does not
    /// change the result.
    pub fn canonical_digest(&self) -> String {
        canonical_digest(&self.records())
    }
}

pub fn canonical_digest(records: &[EventRecord]) -> String {
    let mut keyed: Vec<_> = records
        .iter()
        .map(|r| {
            let (session, phase) = r.event.session_key();
            let body = serde_json::to_string(&(r.ts, &r.event)).expect("events serialize");
            (r.ts, session.to_owned(), phase.unwrap_or(Phase::Step(0)), body)
        })
        .collect();
    keyed.sort();
    let mut h = Sha256::new();
    for (_, _, _, body) in keyed {
        h.update(body.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, ReplayError> {
    let mut out: Vec<EventRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let last_good_seq = out.last().map(|r| r.seq);
        let record: EventRecord = serde_json::from_str(line).map_err(|e| ReplayError::Corrupt {
            line: i + 1,
            last_good_seq,
            reason: e.to_string(),
        })?;
        if last_good_seq.is_some_and(|s| record.seq <= s) {
            return Err(ReplayError::Corrupt { line: i + 1, last_good_seq, reason: "seq not increasing".into() });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn replay(records: &[EventRecord], storage: &SealKey) -> Result<LedgerState, ReplayError> {
    let mut state = LedgerState::new();
    for r in records {
        state.apply(&r.event, storage).map_err(|source| ReplayError::Apply { seq: r.seq, source })?;
    }
    Ok(state)
}

pub fn replay_file(path: impl AsRef<Path>, storage: &SealKey) -> Result<LedgerState, ReplayError> {
    replay(&parse_log(&std::fs::read_to_string(path)?)?, storage)
}
