//! CSV outputs of simulation runs.

use std::io::Write;

use super::physics::RoomState;
use super::run::{PairedRun, TraceReport};
use crate::error::Result;

pub const ROOM_TRACE_HEADER: [&str; 13] = [
    "tick",
    "room",
    "temperature",
    "humidity",
    "luminance",
    "occupied",
    "thermostat",
    "humidifier",
    "light",
    "blind",
    "window",
    "door",
    "alarm",
];

pub const SUMMARY_HEADER: [&str; 18] = [
    "seed",
    "c1",
    "c2",
    "c3",
    "c4",
    "c5",
    "c6",
    "c7",
    "total",
    "suppressed",
    "out_of_range_ticks",
    "actuations",
    "extra_actuations_thermostat",
    "extra_actuations_humidifier",
    "mean_temp_deviation",
    "mean_humidity_deviation",
    "events",
    "commands",
];

fn switch(state: Option<bool>, on: &'static str, off: &'static str) -> &'static str {
    match state {
        Some(true) => on,
        Some(false) => off,
        None => "",
    }
}

fn room_record(tick: usize, room: &str, s: &RoomState) -> [String; 13] {
    [
        tick.to_string(),
        room.to_owned(),
        format!("{:.3}", s.temperature),
        format!("{:.3}", s.humidity),
        format!("{:.1}", s.luminance),
        u8::from(s.occupied).to_string(),
        s.thermostat.map_or("", |m| m.as_str()).to_owned(),
        switch(s.humidifier, "on", "off").to_owned(),
        switch(s.light, "on", "off").to_owned(),
        switch(s.blind, "open", "closed").to_owned(),
        switch(s.window, "open", "closed").to_owned(),
        switch(s.door, "open", "closed").to_owned(),
        switch(s.alarm, "on", "off").to_owned(),
    ]
}

/// One row per room per tick, ticks ascending, rooms in declaration order.
pub fn write_room_trace(output: impl Write, report: &TraceReport) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(ROOM_TRACE_HEADER)?;
    for (tick, rooms) in report.samples.iter().enumerate() {
        for (name, state) in report.rooms.iter().zip(rooms) {
            writer.write_record(room_record(tick, name.as_str(), state))?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Per-seed figures aggregated in `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub seed: u64,
    pub counts: [usize; 7],
    pub suppressed: usize,
    pub out_of_range_ticks: usize,
    pub actuations: usize,
    pub extra_actuations_thermostat: i64,
    pub extra_actuations_humidifier: i64,
    pub mean_temperature_deviation: f64,
    pub mean_humidity_deviation: f64,
    pub events: usize,
    pub commands: usize,
}

impl SummaryRow {
    pub fn of(run: &PairedRun) -> Self {
        let m = &run.main;
        SummaryRow {
            seed: m.seed,
            counts: m.counts,
            suppressed: m.total_suppressed(),
            out_of_range_ticks: m.out_of_range_ticks,
            actuations: m.total_actuations(),
            extra_actuations_thermostat: run.extra_actuations_of("thermostat"),
            extra_actuations_humidifier: run.extra_actuations_of("humidifier"),
            mean_temperature_deviation: run.mean_temperature_deviation,
            mean_humidity_deviation: run.mean_humidity_deviation,
            events: m.events.len(),
            commands: m.commands.len(),
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    fn numbers(&self) -> [f64; 17] {
        let c = self.counts.map(|x| x as f64);
        [
            c[0],
            c[1],
            c[2],
            c[3],
            c[4],
            c[5],
            c[6],
            self.total() as f64,
            self.suppressed as f64,
            self.out_of_range_ticks as f64,
            self.actuations as f64,
            self.extra_actuations_thermostat as f64,
            self.extra_actuations_humidifier as f64,
            self.mean_temperature_deviation,
            self.mean_humidity_deviation,
            self.events as f64,
            self.commands as f64,
        ]
    }
}

/// Column means over the rows, in [`SUMMARY_HEADER`] order without `seed`.
pub fn summary_means(rows: &[SummaryRow]) -> [f64; 17] {
    let mut sums = [0.0; 17];
    for row in rows {
        for (s, x) in sums.iter_mut().zip(row.numbers()) {
            *s += x;
        }
    }
    if !rows.is_empty() {
        for s in &mut sums {
            *s /= rows.len() as f64;
        }
    }
    sums
}

/// One row per seed followed by a `mean` row.
pub fn write_summary(output: impl Write, rows: &[SummaryRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(SUMMARY_HEADER)?;
    for row in rows {
        let n = row.numbers();
        let mut record = vec![row.seed.to_string()];
        record.extend(n[..13].iter().map(|x| format!("{x}")));
        record.push(format!("{:.6}", n[13]));
        record.push(format!("{:.6}", n[14]));
        record.extend(n[15..].iter().map(|x| format!("{x}")));
        writer.write_record(&record)?;
    }
    let mut mean = vec!["mean".to_owned()];
    mean.extend(summary_means(rows).iter().map(|x| format!("{x:.4}")));
    writer.write_record(&mean)?;
    writer.flush()?;
    Ok(())
}
