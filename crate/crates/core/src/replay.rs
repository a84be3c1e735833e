//! Turns a delimited event log (file or pipe) into an ordered event stream.
//!
//! Row order is stream order. Malformed rows are skipped with a warning and
//! counted; they do not consume a sequence number.

use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};
use log::warn;

use crate::error::{Error, Result};
use crate::event::{parse_event, Event, EventQueue, Header, ParseStats};

pub struct EventReader<R: Read> {
    records: csv::Reader<R>,
    header: Option<Header>,
    stats: ParseStats,
    row: usize,
    next_seq: u64,
    buf: StringRecord,
}

impl EventReader<BufReader<File>> {
    pub fn from_path(path: impl AsRef<Path>, delimiter: u8) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Open {
            path: path.to_path_buf(),
            source,
        })?;
        Self::new(BufReader::new(file), delimiter)
    }
}

impl EventReader<io::Stdin> {
    pub fn from_stdin(delimiter: u8) -> Result<Self> {
        Self::new(io::stdin(), delimiter)
    }
}

impl<R: Read> EventReader<R> {
    /// Reads the header row immediately. An input without any rows is a
    /// valid, empty stream.
    pub fn new(source: R, delimiter: u8) -> Result<Self> {
        let mut records = ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .delimiter(delimiter)
            .from_reader(source);
        let mut first = StringRecord::new();
        let header = if records.read_record(&mut first)? {
            Some(Header::parse(&first)?)
        } else {
            None
        };
        Ok(Self {
            records,
            header,
            stats: ParseStats::default(),
            row: 0,
            next_seq: 0,
            buf: StringRecord::new(),
        })
    }

    pub fn header(&self) -> Option<&Header> {
        self.header.as_ref()
    }

    pub fn stats(&self) -> ParseStats {
        self.stats
    }

    /// Next well-formed event, or `Ok(None)` at end of input. I/O errors
    /// are returned; malformed rows are skipped.
    pub fn next_event(&mut self) -> Result<Option<Event>> {
        let Some(header) = self.header.as_ref() else {
            return Ok(None);
        };
        loop {
            match self.records.read_record(&mut self.buf) {
                Ok(false) => return Ok(None),
                Ok(true) => {}
                Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
                Err(e) => {
                    self.row += 1;
                    self.stats.malformed_rows += 1;
                    warn!("skipping row {}: {e}", self.row);
                    continue;
                }
            }
            self.row += 1;
            if self.buf.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            match parse_event(&self.buf, header, self.row, self.next_seq, &mut self.stats) {
                Ok(ev) => {
                    self.next_seq += 1;
                    return Ok(Some(ev));
                }
                Err(e) => {
                    self.stats.malformed_rows += 1;
                    warn!("skipping malformed input: {e}");
                }
            }
        }
    }

    /// Feeds every event into `queue`, waiting for room when it is full, and
    /// closes the queue at end of input.
    pub fn pump(mut self, queue: &EventQueue) -> Result<ParseStats> {
        let result = (|| {
            while let Some(ev) = self.next_event()? {
                queue.push(ev)?;
            }
            Ok(self.stats)
        })();
        queue.close();
        result
    }
}

impl<R: Read> Iterator for EventReader<R> {
    type Item = Event;

    /// Ends the stream on an I/O error after logging it; use
    /// [`EventReader::next_event`] to observe the error.
    fn next(&mut self) -> Option<Event> {
        match self.next_event() {
            Ok(ev) => ev,
            Err(e) => {
                warn!("stopping replay: {e}");
                None
            }
        }
    }
}
