//! Append-only event store with JSONL persistence and session replay.
//!
//! Each line of the log file is one record:
//!
//! ```json
//! {"seq":1,"timestamp":"2026-01-01T00:00:00Z","session_id":"…","kind":"session-created","payload":{…}}
//! ```
//!
//! `seq` starts at 1 and increases by one per record; it is the only
//! ordering key. Lines are written whole, each terminated by `\n`; a trailing
//! line without its newline is an interrupted append and is discarded (and
//! truncated away) when the file is reopened.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exploration::{EventKind, ExplorationError, Session, SessionEvent};
use crate::ids::SessionId;

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("event store unavailable: {0}")]
    StoreUnavailable(#[from] io::Error),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("malformed line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("corrupt log at seq {seq}: {source}")]
    CorruptLog {
        seq: u64,
        #[source]
        source: ExplorationError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub session_id: SessionId,
    #[serde(flatten)]
    pub event: SessionEvent,
}

impl EventRecord {
    pub fn kind(&self) -> EventKind {
        self.event.kind()
    }

    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("event records always serialize");
        line.push('\n');
        line
    }
}

#[derive(Default)]
struct Inner {
    records: Vec<EventRecord>,
    sessions: HashSet<SessionId>,
    file: Option<File>,
}

impl Inner {
    fn next_seq(&self) -> u64 {
        self.records.last().map_or(1, |r| r.seq + 1)
    }

    fn check(&self, record: &EventRecord) -> Result<(), EventLogError> {
        let expected = self.next_seq();
        if record.seq != expected {
            return Err(EventLogError::InvalidEvent(format!(
                "seq {} out of order, expected {expected}",
                record.seq
            )));
        }
        let known = self.sessions.contains(&record.session_id);
        match (&record.event, known) {
            (SessionEvent::SessionCreated { theme_phrase, .. }, false) => {
                if theme_phrase.trim().is_empty() {
                    return Err(EventLogError::InvalidEvent("session-created with empty theme".into()));
                }
                Ok(())
            }
            (SessionEvent::SessionCreated { .. }, true) => Err(EventLogError::InvalidEvent(format!(
                "session {} created twice",
                record.session_id
            ))),
            (event, false) => Err(EventLogError::InvalidEvent(format!(
                "{:?} references unknown session {}",
                event.kind(),
                record.session_id
            ))),
            (_, true) => Ok(()),
        }
    }

    fn push(&mut self, record: EventRecord) {
        if record.kind() == EventKind::SessionCreated {
            self.sessions.insert(record.session_id);
        }
        self.records.push(record);
    }
}

/// Append-only store of [`EventRecord`]s, optionally backed by a JSONL file.
#[derive(Default)]
pub struct EventStore {
    inner: Mutex<Inner>,
    path: Option<PathBuf>,
}

impl EventStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a JSONL log file and loads its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, EventLogError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;

        let mut inner = Inner::default();
        let mut reader = BufReader::new(&mut file);
        let mut line = String::new();
        let mut complete_len: u64 = 0;
        let mut line_no = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line)?;
            if read == 0 || !line.ends_with('\n') {
                break;
            }
            line_no += 1;
            complete_len += read as u64;
            let record = parse_line(&line, line_no)?;
            inner.check(&record).map_err(|e| EventLogError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
            inner.push(record);
        }
        drop(reader);

        if file.metadata()?.len() != complete_len {
            tracing::warn!(path = %path.display(), "discarding interrupted trailing record");
            file.set_len(complete_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        inner.file = Some(file);
        Ok(Self {
            inner: Mutex::new(inner),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Appends `event` for `session_id`, returning its sequence number.
    pub fn append(&self, session_id: SessionId, event: SessionEvent) -> Result<u64, EventLogError> {
        self.append_at(session_id, event, Utc::now())
    }

    pub fn append_at(&self, session_id: SessionId, event: SessionEvent, timestamp: DateTime<Utc>) -> Result<u64, EventLogError> {
        let mut inner = self.inner.lock();
        let record = EventRecord {
            seq: inner.next_seq(),
            timestamp,
            session_id,
            event,
        };
        inner.check(&record)?;
        if let Some(file) = inner.file.as_mut() {
            // One write call per record keeps a crash from interleaving
            // partial records; the reopen path drops an unterminated tail.
            file.write_all(record.to_line().as_bytes())?;
            file.flush()?;
        }
        let seq = record.seq;
        inner.push(record);
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Highest assigned sequence number, 0 when empty.
    pub fn last_seq(&self) -> u64 {
        self.inner.lock().records.last().map_or(0, |r| r.seq)
    }

    /// A copy of every record with `seq <= upto`.
    pub fn snapshot(&self, upto: u64) -> Vec<EventRecord> {
        let inner = self.inner.lock();
        inner.records.iter().take_while(|r| r.seq <= upto).cloned().collect()
    }

    pub fn records(&self) -> Vec<EventRecord> {
        self.inner.lock().records.clone()
    }

    /// Session ids in creation order.
    pub fn session_ids(&self) -> Vec<SessionId> {
        self.inner
            .lock()
            .records
            .iter()
            .filter(|r| r.kind() == EventKind::SessionCreated)
            .map(|r| r.session_id)
            .collect()
    }

    /// Serializes records whose seq falls in `range` as JSONL.
    pub fn export(&self, range: RangeInclusive<u64>) -> Vec<u8> {
        let inner = self.inner.lock();
        let mut out = Vec::new();
        for record in inner.records.iter().filter(|r| range.contains(&r.seq)) {
            out.extend_from_slice(record.to_line().as_bytes());
        }
        out
    }

    pub fn export_all(&self) -> Vec<u8> {
        self.export(1..=u64::MAX)
    }

    /// Builds an in-memory store from a JSONL stream. Records must be
    /// contiguous from seq 1 and obey the same rules as [`EventStore::append`].
    pub fn import(reader: impl BufRead) -> Result<Self, EventLogError> {
        let mut inner = Inner::default();
        for (index, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = parse_line(&line, index + 1)?;
            inner.check(&record).map_err(|e| EventLogError::MalformedLine {
                line: index + 1,
                message: e.to_string(),
            })?;
            inner.push(record);
        }
        Ok(Self {
            inner: Mutex::new(inner),
            path: None,
        })
    }

    pub fn import_bytes(bytes: &[u8]) -> Result<Self, EventLogError> {
        Self::import(bytes)
    }

    /// Rebuilds a session from its records.
    pub fn replay(&self, session_id: SessionId) -> Result<Session, EventLogError> {
        replay_records(&self.records(), session_id)
    }

    /// Rebuilds a session from records with `seq <= upto`.
    pub fn replay_at(&self, session_id: SessionId, upto: u64) -> Result<Session, EventLogError> {
        replay_records(&self.snapshot(upto), session_id)
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<EventRecord, EventLogError> {
    serde_json::from_str(line.trim_end_matches(['\n', '\r'])).map_err(|e| EventLogError::MalformedLine {
        line: line_no,
        message: e.to_string(),
    })
}

/// Rebuilds `session_id` by applying its records in seq order.
pub fn replay_records(records: &[EventRecord], session_id: SessionId) -> Result<Session, EventLogError> {
    let mut relevant = records.iter().filter(|r| r.session_id == session_id);
    let first = relevant.next().ok_or(EventLogError::UnknownSession(session_id))?;
    let mut session = Session::from_created(session_id, &first.event).map_err(|source| EventLogError::CorruptLog {
        seq: first.seq,
        source,
    })?;
    for record in relevant {
        session
            .apply(&record.event)
            .map_err(|source| EventLogError::CorruptLog { seq: record.seq, source })?;
    }
    Ok(session)
}
