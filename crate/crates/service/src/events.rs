//! Append-only JSON-lines event log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use corax_core::CaseBundleFile;
use corax_core::referral::{Actor, CaseAnalysis, Decision};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const LOG_FILE: &str = "events.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    CaseIngested {
        case_id: String,
        content_hash: String,
        bundle: CaseBundleFile,
    },
    CaseAnalyzed {
        case_id: String,
        analysis: CaseAnalysis,
    },
    ReferralDecided {
        referral_id: String,
        decision: Decision,
        actor: Actor,
    },
    DatasetGenerated {
        summary: serde_json::Value,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

pub struct EventLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl EventLog {
    /// Opens (creating if needed) the log and returns it with every stored
    /// event. Sequence numbers must start at 1 and have no gaps.
    pub fn open(path: &Path) -> Result<(EventLog, Vec<Event>), ServiceError> {
        let events = if path.exists() {
            read_events(path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let next_seq = events.last().map_or(1, |e| e.seq + 1);
        Ok((
            EventLog {
                path: path.to_path_buf(),
                file,
                next_seq,
            },
            events,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, body: EventBody) -> Result<Event, ServiceError> {
        let event = Event {
            seq: self.next_seq,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64),
            body,
        };
        let mut line = serde_json::to_string(&event)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        self.next_seq += 1;
        Ok(event)
    }
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, ServiceError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out: Vec<Event> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line).map_err(|e| {
            ServiceError::CorruptLog(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        let expected = out.last().map_or(1, |e| e.seq + 1);
        if event.seq != expected {
            return Err(ServiceError::CorruptLog(format!(
                "{}:{}: expected seq {expected}, found {}",
                path.display(),
                i + 1,
                event.seq
            )));
        }
        out.push(event);
    }
    Ok(out)
}
