//! Stream elements and the hand-off queue between reader and engine.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Condvar, Mutex};

use csv::StringRecord;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_QUEUE_CAPACITY: usize = 100_000;

/// One event of a process instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    /// Position in the stream, 0-based and gap free.
    pub seq: u64,
    /// Carried through but never used for ordering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub attributes: BTreeMap<String, f64>,
}

impl Event {
    pub fn new(case_id: impl Into<String>, activity: impl Into<String>, seq: u64) -> Self {
        Self {
            case_id: case_id.into(),
            activity: activity.into(),
            seq,
            timestamp: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: f64) -> Self {
        self.attributes.insert(name.into(), value);
        self
    }
}

/// Column layout resolved from the header row.
#[derive(Debug, Clone)]
pub struct Header {
    case_id: usize,
    activity: usize,
    timestamp: Option<usize>,
    attributes: Vec<(usize, String)>,
}

impl Header {
    pub fn parse(record: &StringRecord) -> Result<Self> {
        let mut case_id = None;
        let mut activity = None;
        let mut timestamp = None;
        let mut attributes = Vec::new();
        for (idx, raw) in record.iter().enumerate() {
            // tolerate a UTF-8 BOM on the first column
            let name = raw.trim().trim_start_matches('\u{feff}');
            match name {
                "case_id" => case_id = Some(idx),
                "activity" => activity = Some(idx),
                "timestamp" => timestamp = Some(idx),
                "" => {}
                other => attributes.push((idx, other.to_string())),
            }
        }
        Ok(Self {
            case_id: case_id.ok_or(Error::MissingColumn("case_id"))?,
            activity: activity.ok_or(Error::MissingColumn("activity"))?,
            timestamp,
            attributes,
        })
    }

    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|(_, n)| n.as_str())
    }
}

/// Running counters for recoverable parse problems.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    /// Extra columns whose value was not a finite number.
    pub skipped_values: u64,
    /// Rows rejected as malformed.
    pub malformed_rows: u64,
}

/// Builds an [`Event`] from one delimited record.
///
/// `row` is the 1-based data row number used in error messages. Extra
/// columns that do not parse as finite numbers are left out of the
/// attribute map and counted in `stats.skipped_values`; empty cells are
/// treated as absent.
pub fn parse_event(
    record: &StringRecord,
    header: &Header,
    row: usize,
    seq: u64,
    stats: &mut ParseStats,
) -> Result<Event> {
    let field = |idx: usize, name: &str| -> Result<String> {
        match record.get(idx).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v.to_string()),
            _ => Err(Error::MalformedRow {
                row,
                reason: format!("missing {name}"),
            }),
        }
    };
    let case_id = field(header.case_id, "case_id")?;
    let activity = field(header.activity, "activity")?;
    let timestamp = header
        .timestamp
        .and_then(|i| record.get(i))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string);

    let mut attributes = BTreeMap::new();
    for (idx, name) in &header.attributes {
        let Some(raw) = record.get(*idx).map(str::trim) else {
            continue;
        };
        if raw.is_empty() {
            continue;
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                attributes.insert(name.clone(), v);
            }
            _ => stats.skipped_values += 1,
        }
    }

    Ok(Event {
        case_id,
        activity,
        seq,
        timestamp,
        attributes,
    })
}

#[derive(Debug, Default)]
struct QueueState {
    buf: VecDeque<Event>,
    closed: bool,
}

/// Bounded FIFO shared by one producer and one consumer.
///
/// The queue never drops events: [`EventQueue::try_push`] reports a full
/// queue as an error and [`EventQueue::push`] waits for room.
#[derive(Debug)]
pub struct EventQueue {
    capacity: usize,
    state: Mutex<QueueState>,
    not_empty: Condvar,
    not_full: Condvar,
}

impl Default for EventQueue {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_QUEUE_CAPACITY)
    }
}

impl EventQueue {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            capacity,
            state: Mutex::new(QueueState::default()),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn try_push(&self, event: Event) -> Result<()> {
        let mut state = self.state.lock().unwrap();
        if state.closed {
            return Err(Error::QueueClosed);
        }
        if state.buf.len() >= self.capacity {
            return Err(Error::QueueFull {
                capacity: self.capacity,
            });
        }
        state.buf.push_back(event);
        self.not_empty.notify_one();
        Ok(())
    }

    /// Blocks while the queue is full.
    pub fn push(&self, event: Event) -> Result<()> {
        let mut state = self.state.lock().unwrap();
        while state.buf.len() >= self.capacity && !state.closed {
            state = self.not_full.wait(state).unwrap();
        }
        if state.closed {
            return Err(Error::QueueClosed);
        }
        state.buf.push_back(event);
        self.not_empty.notify_one();
        Ok(())
    }

    /// Blocks until an event is available; `None` once closed and drained.
    pub fn pop(&self) -> Option<Event> {
        let mut state = self.state.lock().unwrap();
        loop {
            if let Some(ev) = state.buf.pop_front() {
                self.not_full.notify_one();
                return Some(ev);
            }
            if state.closed {
                return None;
            }
            state = self.not_empty.wait(state).unwrap();
        }
    }

    pub fn try_pop(&self) -> Option<Event> {
        let mut state = self.state.lock().unwrap();
        let ev = state.buf.pop_front();
        if ev.is_some() {
            self.not_full.notify_one();
        }
        ev
    }

    /// No further pushes; pending events can still be popped.
    pub fn close(&self) {
        let mut state = self.state.lock().unwrap();
        state.closed = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }
}
