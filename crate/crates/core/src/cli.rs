//! Command-line front end.
//!
//! Exit status: 0 when nothing was found, 1 when conflicts were found, 2 on
//! usage or input errors.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::detector::{count_by_kind, static_check, Conflict, ConflictKind, Detector};
use crate::error::{Error, Result};
use crate::model::{DetectorConfig, Document};
use crate::simulator::{
    builtin_scenario, run_paired, summary_means, write_room_trace, write_summary, Enforcement,
    Scenario, SummaryRow, SUMMARY_HEADER,
};
use crate::trace::{read_trace, ticks, write_conflicts, write_trace, CONFLICT_HEADER};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_FOUND: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "iot-conflict", version, about = "Detect conflicts between trigger-action IoT rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List rule pairs that can violate a policy under some event stream.
    Check {
        #[arg(long, value_name = "PATH")]
        ruleset: PathBuf,
        #[command(flatten)]
        windows: Windows,
    },
    /// Stream a trace through the detector and log every conflict.
    Monitor {
        #[arg(long, value_name = "PATH")]
        ruleset: PathBuf,
        #[arg(long, value_name = "PATH")]
        trace: PathBuf,
        /// Write `conflicts.csv` here instead of printing the log.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[command(flatten)]
        windows: Windows,
    },
    /// Run a bundled (S1..S8) or file-defined scenario over one or more seeds.
    Simulate {
        /// Scenario id or path to a scenario file.
        #[arg(long, value_name = "ID")]
        scenario: String,
        /// First seed; defaults to the scenario's own.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long, value_enum)]
        enforcement: Option<EnforcementArg>,
        #[command(flatten)]
        windows: Windows,
    },
    /// Per-kind totals and a cumulative per-tick series from a conflict log.
    Report {
        /// A conflict log as written by `monitor` or `simulate`.
        #[arg(long, value_name = "PATH")]
        trace: PathBuf,
        /// Write `conflict_series.csv` here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EnforcementArg {
    None,
    Duplicates,
    All,
}

impl From<EnforcementArg> for Enforcement {
    fn from(e: EnforcementArg) -> Self {
        match e {
            EnforcementArg::None => Enforcement::None,
            EnforcementArg::Duplicates => Enforcement::Duplicates,
            EnforcementArg::All => Enforcement::All,
        }
    }
}

#[derive(Debug, Args)]
struct Windows {
    /// Overlap window W in ticks.
    #[arg(long, value_name = "N")]
    overlap_window: Option<u64>,
    /// Duplicate window D in ticks.
    #[arg(long, value_name = "N")]
    dup_window: Option<u64>,
    /// Same-tick tolerance in ticks.
    #[arg(long, value_name = "N")]
    epsilon: Option<u64>,
}

impl Windows {
    fn apply(&self, cfg: &DetectorConfig) -> Result<DetectorConfig> {
        let mut cfg = cfg.clone();
        if let Some(w) = self.overlap_window {
            cfg.overlap_window = w;
        }
        if let Some(d) = self.dup_window {
            cfg.duplicate_window = d;
        }
        if let Some(e) = self.epsilon {
            cfg.same_tick_epsilon = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_ERROR;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_CLEAN;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn read_document(path: &Path) -> Result<Document> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("file {}", path.display()), e.to_string()))?;
    Document::parse(&text)
}

fn status(found: bool) -> i32 {
    if found {
        EXIT_FOUND
    } else {
        EXIT_CLEAN
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Check { ruleset, windows } => {
            let doc = read_document(&ruleset)?;
            let cfg = windows.apply(&doc.config)?;
            cmd_check(&doc, &cfg, out)
        }
        Command::Monitor {
            ruleset,
            trace,
            out: dir,
            windows,
        } => {
            let doc = read_document(&ruleset)?;
            let cfg = windows.apply(&doc.config)?;
            let file = File::open(&trace)
                .map_err(|e| Error::invalid(format!("file {}", trace.display()), e.to_string()))?;
            let events = read_trace(std::io::BufReader::new(file), doc.ruleset.registry())?;
            let conflicts = monitor(&doc, &cfg, &events)?;
            match dir {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    write_conflicts(create(&dir.join("conflicts.csv"))?, &conflicts)?;
                }
                None => {
                    write_conflicts(&mut *out, &conflicts)?;
                    writeln!(out)?;
                }
            }
            write_counts(out, &count_by_kind(&conflicts))?;
            Ok(status(!conflicts.is_empty()))
        }
        Command::Simulate {
            scenario,
            seed,
            seeds,
            out: dir,
            horizon,
            enforcement,
            windows,
        } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(h) = horizon {
                s = s.with_horizon(h);
            }
            if let Some(e) = enforcement {
                s = s.with_enforcement(e.into());
            }
            let cfg = windows.apply(&s.document.config)?;
            let first = seed.unwrap_or(s.seed);
            let rows = simulate(&s, &cfg, first, seeds, &dir)?;
            let means = summary_means(&rows);
            writeln!(out, "scenario {} seeds {}..{}", s.id, first, first + seeds - 1)?;
            for (name, value) in SUMMARY_HEADER[1..].iter().zip(means) {
                writeln!(out, "mean {name} {value:.4}")?;
            }
            Ok(status(rows.iter().any(|r| r.total() > 0)))
        }
        Command::Report { trace, out: dir } => {
            let file = File::open(&trace)
                .map_err(|e| Error::invalid(format!("file {}", trace.display()), e.to_string()))?;
            let series = read_conflict_series(std::io::BufReader::new(file))?;
            let totals = series.last().map_or([0; 7], |(_, c)| *c);
            if let Some(dir) = dir {
                fs::create_dir_all(&dir)?;
                write_series(create(&dir.join("conflict_series.csv"))?, &series)?;
            }
            write_counts(out, &totals)?;
            Ok(status(totals.iter().any(|&c| c > 0)))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::invalid(format!("file {}", path.display()), e.to_string()))
}

fn write_counts(out: &mut dyn Write, counts: &[usize; 7]) -> Result<()> {
    writeln!(out, "kind,count")?;
    for kind in ConflictKind::ALL {
        writeln!(out, "{kind},{}", counts[kind.index()])?;
    }
    writeln!(out, "total,{}", counts.iter().sum::<usize>())?;
    Ok(())
}

fn cmd_check(doc: &Document, cfg: &DetectorConfig, out: &mut dyn Write) -> Result<i32> {
    let found = static_check(&doc.ruleset, cfg);
    writeln!(out, "{} potential conflicts", found.len())?;
    for kind in ConflictKind::ALL {
        let group: Vec<_> = found.iter().filter(|p| p.kind == kind).collect();
        if group.is_empty() {
            continue;
        }
        writeln!(out, "{kind} ({})", group.len())?;
        for p in group {
            writeln!(
                out,
                "  {} [{}] / {} [{}]: {}",
                p.rule_a, p.controllers.0, p.rule_b, p.controllers.1, p.note
            )?;
        }
    }
    Ok(status(!found.is_empty()))
}

/// Streams a validated trace through a fresh detector.
pub fn monitor(doc: &Document, cfg: &DetectorConfig, events: &[crate::model::Event]) -> Result<Vec<Conflict>> {
    let mut detector = Detector::new(&doc.ruleset, cfg)?;
    let mut conflicts = Vec::new();
    for (tick, batch) in ticks(events) {
        conflicts.extend(detector.detect_at_tick(tick, batch)?);
    }
    crate::detector::sort_conflicts(&mut conflicts);
    Ok(conflicts)
}

/// A bundled scenario id, or a path to a scenario file.
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        Scenario::parse(&text)
    } else {
        builtin_scenario(spec)
    }
}

fn simulate(
    s: &Scenario,
    cfg: &DetectorConfig,
    first: u64,
    seeds: u64,
    dir: &Path,
) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(dir)?;
    let doc = Document::new(s.document.ruleset.clone(), cfg.clone())?;
    fs::write(dir.join("ruleset.toml"), doc.to_toml())?;

    let seed_list: Vec<u64> = (0..seeds).map(|i| first + i).collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(seed_list.len());
    let chunk = seed_list.len().div_ceil(workers);
    let results: Vec<Result<Vec<SummaryRow>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seed_list
            .chunks(chunk)
            .map(|seeds| {
                let doc = &doc;
                scope.spawn(move || {
                    seeds
                        .iter()
                        .map(|&seed| {
                            let run = run_paired(&s.with_seed(seed), &doc.ruleset, &doc.config)?;
                            let m = &run.main;
                            write_room_trace(create(&dir.join(format!("trace_{seed}.csv")))?, m)?;
                            write_conflicts(
                                create(&dir.join(format!("conflicts_{seed}.csv")))?,
                                &m.conflicts,
                            )?;
                            write_trace(create(&dir.join(format!("events_{seed}.csv")))?, &m.events)?;
                            Ok(SummaryRow::of(&run))
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation worker panicked"))
            .collect()
    });
    let mut rows = Vec::with_capacity(seed_list.len());
    for r in results {
        rows.extend(r?);
    }
    write_summary(create(&dir.join("summary.csv"))?, &rows)?;
    Ok(rows)
}

/// Cumulative per-kind counts after each tick that has a conflict.
fn read_conflict_series(input: impl std::io::Read) -> Result<Vec<(u64, [usize; 7])>> {
    let mut reader = csv::Reader::from_reader(input);
    if reader.headers()?.iter().ne(CONFLICT_HEADER) {
        return Err(Error::Trace {
            line: 1,
            message: format!("expected header `{}`", CONFLICT_HEADER.join(",")),
        });
    }
    let mut series: Vec<(u64, [usize; 7])> = Vec::new();
    let mut counts = [0; 7];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row as u64 + 2, |p| p.line());
        let bad = |what: &str| Error::Trace {
            line,
            message: format!("bad {what}"),
        };
        let tick: u64 = record.get(0).and_then(|t| t.parse().ok()).ok_or_else(|| bad("tick"))?;
        let kind: ConflictKind = record
            .get(1)
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| bad("kind"))?;
        if series.last().is_some_and(|&(t, _)| tick < t) {
            return Err(Error::Trace {
                line,
                message: format!("tick {tick} is out of order"),
            });
        }
        counts[kind.index()] += 1;
        match series.last_mut() {
            Some((t, c)) if *t == tick => *c = counts,
            _ => series.push((tick, counts)),
        }
    }
    Ok(series)
}

fn write_series(output: impl Write, series: &[(u64, [usize; 7])]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(["tick", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "total"])?;
    for (tick, counts) in series {
        let mut record = vec![tick.to_string()];
        record.extend(counts.iter().map(usize::to_string));
        record.push(counts.iter().sum::<usize>().to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
