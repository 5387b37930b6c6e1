//! JSON-lines persistence for traces.
//!
//! A trace file starts with one header record and then holds one event per
//! line, each written with sorted keys so that a save, load and save round
//! trip reproduces the file byte for byte. Files live at
//! `<root>/<task>/<session_id>.jsonl`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tasks::TaskKind;
use crate::trace::{canonical_json, InteractionTrace, Millis, SessionId, TraceEvent, TraceHeader};

pub const SCHEMA_VERSION: u32 = 1;
const HEADER_TAG: &str = "header";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaMismatch { found: u32 },
    #[error("event seq {found} does not follow {expected}")]
    SeqGap { expected: u64, found: u64 },
    #[error("corrupt event on line {line}: {message}")]
    CorruptEvent { line: usize, message: String },
    #[error("event seq {seq} has timestamp {timestamp} before the previous event's {previous}")]
    ClockRegression { seq: u64, timestamp: Millis, previous: Millis },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HeaderRecord {
    record: String,
    schema_version: u32,
    #[serde(flatten)]
    header: TraceHeader,
}

fn header_line(header: &TraceHeader) -> String {
    canonical_json(&HeaderRecord { record: HEADER_TAG.into(), schema_version: SCHEMA_VERSION, header: header.clone() })
}

/// The full file contents for `trace`.
pub fn encode_trace(trace: &InteractionTrace) -> String {
    let mut out = header_line(&trace.header);
    out.push('\n');
    for ev in &trace.events {
        out.push_str(&canonical_json(ev));
        out.push('\n');
    }
    out
}

/// Writes the whole trace, replacing any existing file atomically.
pub fn save_trace(path: &Path, trace: &InteractionTrace) -> Result<(), StoreError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(encode_trace(trace).as_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTrace {
    pub trace: InteractionTrace,
    /// A partially written final line was dropped.
    pub truncated_tail: bool,
}

pub fn load_trace(path: &Path) -> Result<LoadedTrace, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let loaded = decode_trace(&text)?;
    if loaded.truncated_tail {
        tracing::warn!(path = %path.display(), "dropped a partial final line");
    }
    Ok(loaded)
}

pub fn decode_trace(text: &str) -> Result<LoadedTrace, StoreError> {
    let mut lines: Vec<&str> = text.split_inclusive('\n').collect();
    let Some(first) = lines.first().copied() else {
        return Err(StoreError::CorruptHeader("file is empty".into()));
    };
    if !first.ends_with('\n') {
        return Err(StoreError::CorruptHeader("header line is incomplete".into()));
    }
    let raw: serde_json::Value =
        serde_json::from_str(first).map_err(|e| StoreError::CorruptHeader(e.to_string()))?;
    if raw.get("record").and_then(|v| v.as_str()) != Some(HEADER_TAG) {
        return Err(StoreError::CorruptHeader("first record is not a header".into()));
    }
    let version = raw
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| StoreError::CorruptHeader("missing schema_version".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(StoreError::SchemaMismatch { found: version as u32 });
    }
    let header: HeaderRecord =
        serde_json::from_value(raw).map_err(|e| StoreError::CorruptHeader(e.to_string()))?;

    let mut truncated_tail = false;
    if lines.len() > 1 && !lines[lines.len() - 1].ends_with('\n') {
        let tail = lines[lines.len() - 1];
        if serde_json::from_str::<TraceEvent>(tail).is_err() {
            lines.pop();
            truncated_tail = true;
        }
    }

    let mut events: Vec<TraceEvent> = Vec::with_capacity(lines.len() - 1);
    for (i, line) in lines.iter().enumerate().skip(1) {
        let ev: TraceEvent = serde_json::from_str(line)
            .map_err(|e| StoreError::CorruptEvent { line: i + 1, message: e.to_string() })?;
        check_next(events.last(), &ev)?;
        events.push(ev);
    }
    Ok(LoadedTrace { trace: InteractionTrace { header: header.header, events }, truncated_tail })
}

fn check_next(prev: Option<&TraceEvent>, ev: &TraceEvent) -> Result<(), StoreError> {
    let expected = prev.map_or(0, |p| p.seq + 1);
    if ev.seq != expected {
        return Err(StoreError::SeqGap { expected, found: ev.seq });
    }
    if let Some(p) = prev {
        if ev.timestamp < p.timestamp {
            return Err(StoreError::ClockRegression { seq: ev.seq, timestamp: ev.timestamp, previous: p.timestamp });
        }
    }
    Ok(())
}

/// Appends events to one trace file, one durable line per event. There
/// should be a single writer per file.
pub struct TraceWriter {
    path: PathBuf,
    file: File,
    last: Option<TraceEvent>,
}

impl TraceWriter {
    /// Creates a new file holding only the header. Fails if it exists.
    pub fn create(path: &Path, header: &TraceHeader) -> Result<Self, StoreError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut file = OpenOptions::new().write(true).create_new(true).open(path).map_err(io_err(path))?;
        writeln!(file, "{}", header_line(header)).map_err(io_err(path))?;
        file.sync_data().map_err(io_err(path))?;
        Ok(Self { path: path.to_path_buf(), file, last: None })
    }

    /// Reopens an existing file for appending. A partial final line left by
    /// a crash is cut off first.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let loaded = decode_trace(&text)?;
        let keep: usize = if loaded.truncated_tail {
            text.rfind('\n').map_or(0, |i| i + 1)
        } else {
            text.len()
        };
        let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        file.set_len(keep as u64).map_err(io_err(path))?;
        let mut file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        if !text[..keep].ends_with('\n') {
            // A complete final record written without its newline.
            file.write_all(b"\n").map_err(io_err(path))?;
        }
        Ok(Self { path: path.to_path_buf(), file, last: loaded.trace.events.last().cloned() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.last.as_ref().map_or(0, |e| e.seq + 1)
    }

    pub fn append_event(&mut self, event: &TraceEvent) -> Result<(), StoreError> {
        check_next(self.last.as_ref(), event)?;
        let mut line = canonical_json(event);
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))?;
        self.last = Some(event.clone());
        Ok(())
    }
}

/// A directory of trace files laid out by task.
#[derive(Debug, Clone)]
pub struct TraceStore {
    root: PathBuf,
}

impl TraceStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, task: TaskKind, session_id: &SessionId) -> PathBuf {
        self.root.join(task.as_str()).join(format!("{}.jsonl", session_id.as_str()))
    }

    pub fn save(&self, trace: &InteractionTrace) -> Result<PathBuf, StoreError> {
        let path = self.path_for(trace.task_kind(), trace.session_id());
        save_trace(&path, trace)?;
        Ok(path)
    }

    /// Every trace file under the root, sorted by path.
    pub fn list(&self) -> Result<Vec<PathBuf>, StoreError> {
        let mut out = Vec::new();
        if !self.root.exists() {
            return Ok(out);
        }
        for task in TaskKind::ALL {
            let dir = self.root.join(task.as_str());
            if !dir.is_dir() {
                continue;
            }
            for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
                let path = entry.map_err(io_err(&dir))?.path();
                if path.extension().is_some_and(|e| e == "jsonl") {
                    out.push(path);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn load_all(&self) -> Result<Vec<InteractionTrace>, StoreError> {
        self.list()?.iter().map(|p| load_trace(p).map(|l| l.trace)).collect()
    }
}
