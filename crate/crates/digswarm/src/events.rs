//! Append-only run log, one JSON object per line.
//!
//! Two record shapes share the stream. Per-tick samples carry the fields
//! `tick, robot, state, pos, heading, contact`; discrete events carry
//! `tick, robot?, event, payload`. The log is the sole input to every
//! analysis in [`crate::metrics`], so anything a metric needs must be here,
//! including a `run_meta` header with the static facts of the run.

use crate::agent::{Heading, StateTag};
use crate::policy::{TripChoice, TripOutcome};
use crate::world::{Position, RobotId};
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};

/// How a contact ended: the blocked robot got past (or the blocker moved
/// off), or the blocked robot turned around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Pass,
    GiveUp,
}

/// Discrete events, tagged as `{"event": ..., "payload": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "payload", rename_all = "snake_case")]
pub enum Event {
    /// Run header: static facts analyses need to interpret the log.
    RunMeta { l0: u32, robots: u32, horizon: u64 },
    /// One pellet delivered; `deposit_count` is the cumulative tally.
    DepositMade { deposit_count: u64 },
    /// The tunnel extended by one cell at the face.
    TunnelGrew { l_true: u32 },
    /// A trip decision was made; `k` is the robot's trip counter.
    TripStarted { choice: TripChoice, k: u32 },
    /// A trip or rest period finished and was scored.
    TripEnded { outcome: TripOutcome },
    /// An inbound robot ran into the robot(s) blocking its next cell.
    ContactStarted { blockers: Vec<RobotId> },
    /// The contact ended.
    ContactResolved { resolution: Resolution },
    /// A pellet grab produced a length measurement and estimator update.
    EstimateUpdated { l_raw: f64, l_est: f64 },
}

/// One per-tick state sample of one robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub tick: u64,
    pub robot: RobotId,
    pub state: StateTag,
    pub pos: Position,
    pub heading: Heading,
    /// Party to a contact that is active or started this tick.
    pub contact: bool,
}

/// One discrete event, optionally attributed to a robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub robot: Option<RobotId>,
    #[serde(flatten)]
    pub event: Event,
}

/// One log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Record {
    // Tried in order: events carry the `event` field, samples don't.
    Event(EventRecord),
    Sample(SampleRecord),
}

impl Record {
    pub fn tick(&self) -> u64 {
        match self {
            Record::Event(e) => e.tick,
            Record::Sample(s) => s.tick,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// In-memory event log. Append-only; ticks never decrease.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    records: Vec<Record>,
}

impl EventLog {
    pub fn new() -> Self {
        EventLog::default()
    }

    pub fn push(&mut self, record: Record) {
        debug_assert!(
            self.records.last().map_or(true, |r| r.tick() <= record.tick()),
            "log ticks must be non-decreasing"
        );
        self.records.push(record);
    }

    pub fn push_event(&mut self, tick: u64, robot: Option<RobotId>, event: Event) {
        self.push(Record::Event(EventRecord { tick, robot, event }));
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Sample(s) => Some(s),
            _ => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Event(e) => Some(e),
            _ => None,
        })
    }

    /// Writes the log as newline-delimited JSON, one record per line.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Reads newline-delimited JSON; blank lines are ignored. Errors name
    /// the offending line.
    pub fn read_ndjson<R: BufRead>(reader: R) -> Result<Self, LogError> {
        let mut log = EventLog::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line)
                .map_err(|source| LogError::Parse { line: idx + 1, source })?;
            log.records.push(record);
        }
        Ok(log)
    }

    pub fn from_ndjson_str(text: &str) -> Result<Self, LogError> {
        Self::read_ndjson(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(tick: u64, robot: RobotId, pos: Position) -> Record {
        Record::Sample(SampleRecord {
            tick,
            robot,
            state: StateTag::GotoDig,
            pos,
            heading: Heading::Inbound,
            contact: false,
        })
    }

    #[test]
    fn sample_lines_use_the_stable_field_names() {
        let line = serde_json::to_string(&sample(3, 1, Position::Tunnel(2))).unwrap();
        assert_eq!(
            line,
            r#"{"tick":3,"robot":1,"state":"goto_dig","pos":2,"heading":"inbound","contact":false}"#
        );
    }

    #[test]
    fn event_lines_use_the_stable_field_names() {
        let mut log = EventLog::new();
        log.push_event(9, Some(0), Event::TripEnded { outcome: TripOutcome::Successful });
        log.push_event(9, None, Event::TunnelGrew { l_true: 4 });
        let text = log.to_ndjson_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            r#"{"tick":9,"robot":0,"event":"trip_ended","payload":{"outcome":"successful"}}"#
        );
        assert_eq!(
            lines[1],
            r#"{"tick":9,"event":"tunnel_grew","payload":{"l_true":4}}"#
        );
    }

    #[test]
    fn ndjson_round_trips_every_record_kind() {
        let mut log = EventLog::new();
        log.push_event(0, None, Event::RunMeta { l0: 1, robots: 2, horizon: 100 });
        log.push_event(1, Some(0), Event::TripStarted { choice: TripChoice::Enter, k: 1 });
        log.push_event(1, Some(1), Event::TripStarted { choice: TripChoice::Rest, k: 1 });
        log.push(sample(1, 0, Position::Tunnel(0)));
        log.push(sample(1, 1, Position::Rest));
        log.push_event(2, Some(0), Event::ContactStarted { blockers: vec![1] });
        log.push_event(3, Some(0), Event::ContactResolved { resolution: Resolution::Pass });
        log.push_event(4, Some(0), Event::EstimateUpdated { l_raw: 3.05, l_est: 2.845 });
        log.push_event(5, Some(0), Event::TripEnded { outcome: TripOutcome::Rested });
        log.push_event(6, Some(0), Event::DepositMade { deposit_count: 1 });
        log.push_event(6, None, Event::TunnelGrew { l_true: 2 });
        log.push(sample(6, 0, Position::Home));

        let text = log.to_ndjson_string();
        let back = EventLog::from_ndjson_str(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.samples().count(), 3);
        assert_eq!(back.events().count(), 9);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "{\"tick\":0,\"event\":\"tunnel_grew\",\"payload\":{\"l_true\":2}}\nnot json\n";
        let err = EventLog::from_ndjson_str(text).unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
    }

    #[test]
    fn blank_lines_are_ignored() {
        let text = "\n{\"tick\":1,\"event\":\"deposit_made\",\"payload\":{\"deposit_count\":1}}\n\n";
        let log = EventLog::from_ndjson_str(text).unwrap();
        assert_eq!(log.len(), 1);
    }
}
