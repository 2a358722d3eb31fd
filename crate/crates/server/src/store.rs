//! Append-only persistence: `<dir>/sessions/<id>.jsonl` holds one session's
//! events and `<dir>/index.jsonl` lists sessions in creation order.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::Event;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    pub condition: String,
    pub created_at_ms: u64,
}

pub struct Store {
    dir: PathBuf,
    index: Mutex<()>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn append_line(path: &Path, lines: &str) -> Result<(), StoreError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(lines.as_bytes()).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        let sessions = dir.join("sessions");
        fs::create_dir_all(&sessions).map_err(io_err(&sessions))?;
        Ok(Store { dir, index: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn index_path(&self) -> PathBuf {
        self.dir.join("index.jsonl")
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.dir.join("sessions").join(format!("{session_id}.jsonl"))
    }

    pub fn index(&self) -> Result<Vec<IndexEntry>, StoreError> {
        let path = self.index_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_lines(&path)
    }

    pub fn register(&self, entry: &IndexEntry) -> Result<(), StoreError> {
        let _guard = self.index.lock();
        let mut line = serde_json::to_string(entry).expect("index entries serialize");
        line.push('\n');
        append_line(&self.index_path(), &line)
    }

    /// Appends events to a session log. Callers serialize appends per
    /// session; distinct sessions write distinct files.
    pub fn append(&self, session_id: &str, events: &[Event]) -> Result<(), StoreError> {
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).expect("events serialize"));
            buf.push('\n');
        }
        append_line(&self.log_path(session_id), &buf)
    }

    pub fn load(&self, session_id: &str) -> Result<Vec<Event>, StoreError> {
        read_lines(&self.log_path(session_id))
    }
}

/// Reads a single session log file.
pub fn read_log(path: &Path) -> Result<Vec<Event>, StoreError> {
    read_lines(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Command, CommandEvent};

    #[test]
    fn append_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.index().unwrap().is_empty());
        let entry = IndexEntry { session_id: "a".into(), condition: "alt_baseline".into(), created_at_ms: 5 };
        store.register(&entry).unwrap();
        let tick = Event::Command(CommandEvent { t_ms: 1, client_seq: 0, command: Command::Tick });
        store.append("a", std::slice::from_ref(&tick)).unwrap();
        store.append("a", &[tick.clone(), tick.clone()]).unwrap();
        assert_eq!(store.load("a").unwrap().len(), 3);
        let reopened = Store::open(dir.path()).unwrap();
        assert_eq!(reopened.index().unwrap(), vec![entry]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        fs::write(
            store.log_path("b"),
            "{\"event\":\"command\",\"t_ms\":0,\"client_seq\":0,\"command\":{\"command\":\"tick\"}}\n{oops\n",
        )
        .unwrap();
        match store.load("b") {
            Err(StoreError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(store.load("missing"), Err(StoreError::Io { .. })));
    }
}
