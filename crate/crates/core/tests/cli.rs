use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use iot_conflict::model::Document;
use iot_conflict::oracle::oracle_detect;
use iot_conflict::trace::read_trace;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_iot-conflict"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("exited normally"),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(p)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect()
}

fn summary_value(rows: &[Vec<String>], header: &[String], row: &str, col: &str) -> f64 {
    let c = header.iter().position(|h| h == col).unwrap();
    rows.iter().find(|r| r[0] == row).unwrap()[c].parse().unwrap()
}

fn header(p: &Path) -> Vec<String> {
    csv::Reader::from_path(p)
        .unwrap()
        .headers()
        .unwrap()
        .iter()
        .map(str::to_owned)
        .collect()
}

#[test]
fn check_on_a_clean_ruleset_exits_zero() {
    let (code, out, _) = cli(&["check", "--ruleset", path(&fixture("quiet_home.toml"))]);
    assert_eq!(code, 0);
    assert!(out.starts_with("0 potential conflicts"), "{out}");
}

#[test]
fn check_names_rules_and_controllers() {
    let (code, out, _) = cli(&["check", "--ruleset", path(&fixture("two_controllers.toml"))]);
    assert_eq!(code, 1);
    let doc = Document::parse(&fs::read_to_string(fixture("two_controllers.toml")).unwrap()).unwrap();
    assert!(out.lines().any(|l| l.starts_with("C1 (")), "{out}");
    for rule in doc.ruleset.rules() {
        assert!(out.contains(rule.id.as_str()), "{out}");
        assert!(out.contains(&format!("[{}]", rule.controller)), "{out}");
    }
}

#[test]
fn malformed_input_exits_two_with_a_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[registry]\nlocations = [\"a\"\n").unwrap();
    let (code, _, err) = cli(&["check", "--ruleset", path(&bad)]);
    assert_eq!(code, 2);
    assert!(err.contains("line"), "{err}");

    let missing = dir.path().join("missing.toml");
    assert_eq!(cli(&["check", "--ruleset", path(&missing)]).0, 2);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cli(&[]).0, 2);
    assert_eq!(cli(&["check"]).0, 2);
    assert_eq!(cli(&["frobnicate"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    assert_eq!(cli(&["simulate", "--scenario", "S1", "--seeds", "0", "--out", out]).0, 2);
    assert_eq!(cli(&["simulate", "--scenario", "S42", "--out", out]).0, 2);
    let ruleset = fixture("setpoint.toml");
    assert_eq!(cli(&["check", "--ruleset", path(&ruleset), "--overlap-window", "0"]).0, 2);
    assert_eq!(cli(&["--help"]).0, 0);
}

#[test]
fn monitor_logs_the_duplicate_reading() {
    let (code, out, _) = cli(&[
        "monitor",
        "--ruleset",
        path(&fixture("setpoint.toml")),
        "--trace",
        path(&fixture("setpoint_trace.csv")),
    ]);
    assert_eq!(code, 1);
    let log: Vec<&str> = out.lines().take_while(|l| !l.is_empty()).collect();
    assert_eq!(log[0], "tick,kind,rule_a,rule_b,event_a,event_b,actuator,note");
    assert_eq!(log.len(), 2);
    assert!(log[1].starts_with("20,C7,"), "{}", log[1]);
    assert!(out.contains("C7,1\n") && out.contains("total,1\n"), "{out}");
}

#[test]
fn monitor_with_a_shorter_duplicate_window_finds_nothing() {
    let (code, out, _) = cli(&[
        "monitor",
        "--ruleset",
        path(&fixture("setpoint.toml")),
        "--trace",
        path(&fixture("setpoint_trace.csv")),
        "--dup-window",
        "10",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("total,0"), "{out}");
}

#[test]
fn monitor_on_an_empty_trace_reports_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("empty.csv");
    fs::write(&trace, "tick,sensor,kind,predicate,value,location\n").unwrap();
    let (code, out, _) = cli(&[
        "monitor",
        "--ruleset",
        path(&fixture("smart_home.toml")),
        "--trace",
        path(&trace),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code, 0);
    for kind in ["C1", "C2", "C3", "C4", "C5", "C6", "C7"] {
        assert!(out.contains(&format!("{kind},0\n")), "{out}");
    }
    assert!(out.contains("total,0"));
    assert!(csv_rows(&dir.path().join("conflicts.csv")).is_empty());
}

#[test]
fn out_of_order_traces_are_rejected_with_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.csv");
    fs::write(
        &trace,
        "tick,sensor,kind,predicate,value,location\n5,temp1,temperature,lt,60,room1\n3,temp1,temperature,lt,60,room1\n",
    )
    .unwrap();
    let (code, _, err) = cli(&[
        "monitor",
        "--ruleset",
        path(&fixture("setpoint.toml")),
        "--trace",
        path(&trace),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn simulate_s1_writes_one_row_per_room_and_tick() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = cli(&["simulate", "--scenario", "S1", "--seed", "3", "--out", path(dir.path())]);
    assert_eq!(code, 1, "{out}");
    let rows = csv_rows(&dir.path().join("trace_3.csv"));
    for room in ["room1", "room2", "room3", "corridor"] {
        let n = rows.iter().filter(|r| r[1] == room).count();
        assert_eq!(n, 500, "{room}");
    }
    assert_eq!(header(&dir.path().join("trace_3.csv"))[..5], ["tick", "room", "temperature", "humidity", "luminance"]);
    for file in ["conflicts_3.csv", "events_3.csv", "summary.csv", "ruleset.toml"] {
        assert!(dir.path().join(file).is_file(), "{file}");
    }
}

#[test]
fn simulate_s7_reports_non_negative_extra_thermostat_actuations() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = cli(&["simulate", "--scenario", "S7", "--seed", "1", "--seeds", "4", "--out", path(dir.path())]);
    assert!(code <= 1, "{err}");
    let summary = dir.path().join("summary.csv");
    let head = header(&summary);
    let rows = csv_rows(&summary);
    assert_eq!(rows.len(), 5);
    for row in &rows {
        assert!(summary_value(&rows, &head, &row[0], "extra_actuations_thermostat") >= 0.0);
    }
}

#[test]
fn simulate_output_is_byte_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        cli(&["simulate", "--scenario", "S6", "--seed", "2", "--seeds", "3", "--horizon", "400", "--out", path(dir.path())]);
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3 * 3 + 2);
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn monitor_replays_what_simulate_logged() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    cli(&["simulate", "--scenario", "S5", "--seed", "7", "--seeds", "3", "--out", out]);
    let ruleset = dir.path().join("ruleset.toml");
    let doc = Document::parse(&fs::read_to_string(&ruleset).unwrap()).unwrap();
    for seed in 7..10 {
        let events_path = dir.path().join(format!("events_{seed}.csv"));
        let replay = dir.path().join(format!("replay_{seed}"));
        let (_, stdout, err) = cli(&[
            "monitor",
            "--ruleset",
            path(&ruleset),
            "--trace",
            path(&events_path),
            "--out",
            path(&replay),
        ]);
        assert!(err.is_empty(), "{err}");
        assert_eq!(
            fs::read(replay.join("conflicts.csv")).unwrap(),
            fs::read(dir.path().join(format!("conflicts_{seed}.csv"))).unwrap()
        );
        let events = read_trace(fs::File::open(&events_path).unwrap(), doc.ruleset.registry()).unwrap();
        let expected = oracle_detect(&events, &doc.ruleset, &doc.config);
        let c1 = expected.iter().filter(|c| c.kind.as_str() == "C1").count();
        assert!(stdout.contains(&format!("C1,{c1}\n")), "{stdout}");
        let summary = dir.path().join("summary.csv");
        let reported = summary_value(&csv_rows(&summary), &header(&summary), &seed.to_string(), "c1");
        assert_eq!(reported as usize, c1);
    }
}

#[test]
fn report_accumulates_a_conflict_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    cli(&["simulate", "--scenario", "S5", "--seed", "4", "--out", out]);
    let log = dir.path().join("conflicts_4.csv");
    let n = csv_rows(&log).len();
    let (code, stdout, _) = cli(&["report", "--trace", path(&log), "--out", out]);
    assert_eq!(code, if n > 0 { 1 } else { 0 });
    assert!(stdout.contains(&format!("total,{n}\n")), "{stdout}");
    let series = csv_rows(&dir.path().join("conflict_series.csv"));
    if let Some(last) = series.last() {
        assert_eq!(last[8], n.to_string());
    }
    let (code, _, _) = cli(&["report", "--trace", path(&fixture("setpoint_trace.csv"))]);
    assert_eq!(code, 2);
}
