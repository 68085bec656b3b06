//! CSV formats: event traces in, conflict logs out.
//!
//! Trace: header `tick,sensor,kind,predicate,value,location`, one event per
//! row; an event's id is its zero-based row index.
//! Conflict log: header `tick,kind,rule_a,rule_b,event_a,event_b,actuator,note`.

use std::io::{Read, Write};

use crate::detector::{Conflict, Participants};
use crate::error::{Error, Result};
use crate::model::{Event, EventId, EventSignature, Registry, TimeStamp};

pub const TRACE_HEADER: [&str; 6] = ["tick", "sensor", "kind", "predicate", "value", "location"];
pub const CONFLICT_HEADER: [&str; 8] = [
    "tick", "kind", "rule_a", "rule_b", "event_a", "event_b", "actuator", "note",
];

fn trace_error(line: u64, message: impl Into<String>) -> Error {
    Error::Trace {
        line,
        message: message.into(),
    }
}

/// Reads and validates a trace against the registry: sensors must be
/// declared with the kind and location given, values finite, and ticks
/// non-decreasing.
pub fn read_trace(input: impl Read, registry: &Registry) -> Result<Vec<Event>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(trace_error(
            1,
            format!("expected header `{}`", TRACE_HEADER.join(",")),
        ));
    }

    let mut events = Vec::new();
    let mut last_tick = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row as u64 + 2, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let tick: u64 = field(0)
            .parse()
            .map_err(|_| trace_error(line, format!("bad tick `{}`", field(0))))?;
        if tick < last_tick {
            return Err(trace_error(
                line,
                format!("tick {tick} is earlier than the previous tick {last_tick}"),
            ));
        }
        last_tick = tick;

        let sensor = registry
            .sensor(field(1))
            .ok_or_else(|| trace_error(line, format!("undeclared sensor `{}`", field(1))))?;
        if sensor.kind.as_str() != field(2) {
            return Err(trace_error(
                line,
                format!("sensor `{}` has kind `{}`, not `{}`", sensor.id, sensor.kind, field(2)),
            ));
        }
        if sensor.location.as_str() != field(5) {
            return Err(trace_error(
                line,
                format!(
                    "sensor `{}` is in `{}`, not `{}`",
                    sensor.id,
                    sensor.location,
                    field(5)
                ),
            ));
        }
        let predicate = field(3)
            .parse()
            .map_err(|e: Error| trace_error(line, e.to_string()))?;
        let value: f64 = field(4)
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| trace_error(line, format!("bad value `{}`", field(4))))?;

        events.push(Event {
            id: EventId(row as u64),
            sensor: sensor.id.clone(),
            time: TimeStamp(tick),
            value,
            signature: EventSignature {
                sensor_kind: sensor.kind.clone(),
                predicate,
                location: sensor.location.clone(),
            },
        });
    }
    Ok(events)
}

pub fn write_trace(output: impl Write, events: &[Event]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(TRACE_HEADER)?;
    for e in events {
        writer.write_record([
            e.time.to_string(),
            e.sensor.to_string(),
            e.signature.sensor_kind.to_string(),
            e.signature.predicate.to_string(),
            e.value.to_string(),
            e.signature.location.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Groups events by tick, preserving order within a tick.
pub fn ticks(events: &[Event]) -> impl Iterator<Item = (TimeStamp, &[Event])> {
    events
        .chunk_by(|a, b| a.time == b.time)
        .map(|chunk| (chunk[0].time, chunk))
}

pub fn conflict_record(c: &Conflict) -> [String; 8] {
    let (rule_a, rule_b, actuator) = match &c.participants {
        Participants::Actions(p) => {
            let (a, b) = (&p[0].action.actuator, &p[1].action.actuator);
            let actuator = if a == b {
                a.to_string()
            } else {
                format!("{a}/{b}")
            };
            (p[0].rule.to_string(), p[1].rule.to_string(), actuator)
        }
        Participants::Events(_) => (String::new(), String::new(), String::new()),
    };
    let [ea, eb] = c.events();
    [
        c.tick.to_string(),
        c.kind.to_string(),
        rule_a,
        rule_b,
        ea.id.to_string(),
        eb.id.to_string(),
        actuator,
        c.note.clone(),
    ]
}

pub fn write_conflicts(output: impl Write, conflicts: &[Conflict]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(CONFLICT_HEADER)?;
    for c in conflicts {
        writer.write_record(conflict_record(c))?;
    }
    writer.flush()?;
    Ok(())
}
