//! Newline-delimited JSON session log: every command with its outcome, and
//! periodic snapshots, in the order the simulation saw them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::protocol::{Command, Reason, StateSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Command {
        time: f64,
        client: String,
        seq: u64,
        command: Command,
        /// `None` when accepted.
        rejected: Option<Reason>,
    },
    Snapshot(Box<StateSnapshot>),
}

pub struct SessionLog {
    out: BufWriter<File>,
}

impl SessionLog {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write(&mut self, entry: &LogEntry) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, entry)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Parse a session log back into entries.
pub fn read_log(text: &str) -> serde_json::Result<Vec<LogEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
