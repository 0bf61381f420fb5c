//! JSON-lines audit log of every message sent during a session.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::wire::WireMessage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Milliseconds since the transcript was created.
    pub timestamp_ms: f64,
    /// `P1->P2`, `P3->P2`, ...
    pub direction: String,
    pub msg_type: String,
    pub epoch: u64,
    /// Matrix payload shape, when there is one.
    pub dims: Option<(usize, usize)>,
    pub bytes: usize,
}

/// Cheaply clonable handle; all clones append to the same log.
#[derive(Clone)]
pub struct Transcript {
    start: Instant,
    entries: Arc<Mutex<Vec<TranscriptEntry>>>,
}

impl std::fmt::Debug for Transcript {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transcript").field("entries", &self.entries().len()).finish()
    }
}

impl Default for Transcript {
    fn default() -> Self {
        Self::new()
    }
}

impl Transcript {
    pub fn new() -> Self {
        Self { start: Instant::now(), entries: Arc::default() }
    }

    pub fn record(&self, direction: &str, msg: &WireMessage, bytes: usize) {
        let e = TranscriptEntry {
            timestamp_ms: self.start.elapsed().as_secs_f64() * 1e3,
            direction: direction.to_owned(),
            msg_type: msg.msg_type().name().to_owned(),
            epoch: msg.epoch,
            dims: msg.payload_dims(),
            bytes,
        };
        self.entries.lock().expect("transcript lock").push(e);
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("transcript lock").clone()
    }

    pub fn count(&self, msg_type: &str) -> usize {
        self.entries.lock().expect("transcript lock").iter().filter(|e| e.msg_type == msg_type).count()
    }

    pub fn to_jsonl(&self) -> String {
        self.entries()
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }
}
