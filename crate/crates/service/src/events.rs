//! Append-only session logs: one JSON header line, then one line per event.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::stimuli::TrialRef;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub session_id: String,
    pub participant: String,
    pub stimulus_set: String,
    pub seed: u64,
    pub created_ms: u64,
    #[serde(default)]
    pub note: Option<String>,
    /// Presentation order, fixed at creation.
    pub trials: Vec<TrialRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// A click on an object. `client_ms` is the client's own clock, in ms
    /// since trial start.
    SelectObject { object: usize, client_ms: Option<f64> },
    GlueApplied { a: usize, b: usize, delta: i64 },
    GlueRemoved { a: usize, b: usize, delta: i64 },
    InvalidPair { a: usize, b: usize, delta: i64 },
    GravityStarted,
    TrialScored {
        fallen_ids: Vec<usize>,
        standing: i64,
        glue_cost: i64,
        bonus: i64,
        trial_points: i64,
        total: i64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    /// Server wall clock, strictly increasing within a session.
    pub t_ms: u64,
    pub trial: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

pub fn create_log(path: &Path, header: &Header) -> Result<(), ServiceError> {
    let mut f = OpenOptions::new().write(true).create_new(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(header)?)?;
    f.flush()?;
    Ok(())
}

pub fn append_events(path: &Path, events: &[TrialEvent]) -> Result<(), ServiceError> {
    let mut buf = String::new();
    for e in events {
        buf.push_str(&serde_json::to_string(e)?);
        buf.push('\n');
    }
    let mut f = OpenOptions::new().append(true).open(path)?;
    // One write per batch so a crash never leaves half of an action logged.
    f.write_all(buf.as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<(Header, Vec<TrialEvent>), ServiceError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header: Header = match lines.next() {
        Some(l) => serde_json::from_str(&l?)?,
        None => return Err(ServiceError::Corrupt(format!("{} is empty", path.display()))),
    };
    let mut events = Vec::new();
    for (i, l) in lines.enumerate() {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        events.push(
            serde_json::from_str(&l)
                .map_err(|e| ServiceError::Corrupt(format!("{} line {}: {e}", path.display(), i + 2)))?,
        );
    }
    Ok((header, events))
}
