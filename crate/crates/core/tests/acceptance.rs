//! Acceptance checks. Each prints one PASS or FAIL line; the process fails if
//! any check does.

mod common;

use std::cell::Cell;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use iot_conflict::detector::{sort_conflicts, static_check, Conflict, ConflictKind, Detector};
use iot_conflict::model::{Document, Event, EventId, EventSignature, PredicateClass, TimeStamp};
use iot_conflict::oracle::{oracle_detect, oracle_static};
use iot_conflict::simulator::{builtin_scenario, replay_setpoint, run, run_paired, Enforcement};
use iot_conflict::trace::{read_trace, ticks};
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, pass: String, fail: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(pass)
    } else {
        Err(fail())
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn oracle_equivalence() -> Outcome {
    const CASES: u32 = 1000;
    let start = Instant::now();
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: CASES,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let conflicts = Cell::new(0usize);
    let ran = Cell::new(0u32);
    let result = runner.run(&common::case(10, &[12, 40, 864], 200), |(doc, events)| {
        ran.set(ran.get() + 1);
        let mut detector = Detector::new(&doc.ruleset, &doc.config).unwrap();
        let mut found = Vec::new();
        for (tick, batch) in ticks(&events) {
            found.extend(detector.detect_at_tick(tick, batch).unwrap());
        }
        sort_conflicts(&mut found);
        let expected = oracle_detect(&events, &doc.ruleset, &doc.config);
        if found != expected {
            return Err(TestCaseError::fail(format!(
                "detector found {} conflicts, oracle {}",
                found.len(),
                expected.len()
            )));
        }
        conflicts.set(conflicts.get() + found.len());
        Ok(())
    });
    let elapsed = start.elapsed();
    let (ran, conflicts) = (ran.get(), conflicts.get());
    match result {
        Err(e) => Err(format!("mismatch: {e}")),
        Ok(()) => check(
            ran >= CASES && elapsed < Duration::from_secs(120),
            format!("{ran} cases, {conflicts} conflicts, all equal, {:.1} s", secs(elapsed)),
            || format!("{ran} cases in {:.1} s", secs(elapsed)),
        ),
    }
}

fn duplicate_setpoint() -> Outcome {
    let doc = Document::parse(include_str!("../fixtures/setpoint.toml")).map_err(|e| e.to_string())?;
    let events = read_trace(
        include_str!("../fixtures/setpoint_trace.csv").as_bytes(),
        doc.ruleset.registry(),
    )
    .map_err(|e| e.to_string())?;
    let replay = |suppress| {
        replay_setpoint(&doc.ruleset, &doc.config, &events, "thermo1", 60.0, 10.0, suppress).unwrap()
    };
    let plain = replay(false);
    let kept = replay(true);
    let c7 = kept.conflicts.iter().filter(|c| c.kind == ConflictKind::C7).count();
    check(
        plain.setpoint == 80.0 && kept.setpoint == 70.0 && c7 == 1 && kept.conflicts.len() == 1,
        format!(
            "setpoint {} without suppression, {} with, {c7} C7 logged",
            plain.setpoint, kept.setpoint
        ),
        || format!("setpoints {} / {}, {c7} C7", plain.setpoint, kept.setpoint),
    )
}

fn mean_c1(p_smoke: f64, p_leak: f64) -> f64 {
    let mut s = builtin_scenario("S5").unwrap();
    s.set_probability("smoke", p_smoke).unwrap();
    s.set_probability("leak", p_leak).unwrap();
    let total: usize = (1..=100)
        .map(|seed| run(&s.with_seed(seed)).unwrap().counts[ConflictKind::C1.index()])
        .sum();
    total as f64 / 100.0
}

fn alarm_co_trigger() -> Outcome {
    let start = Instant::now();
    let base = mean_c1(0.05, 0.07);
    let doubled = mean_c1(0.10, 0.10);
    let elapsed = start.elapsed();
    check(
        (6.0..=8.0).contains(&base) && doubled > base && elapsed < Duration::from_secs(30),
        format!(
            "mean C1 {base:.2} over 100 seeds (expected 7), {doubled:.2} at p = 0.10, {:.1} s",
            secs(elapsed)
        ),
        || format!("mean C1 {base:.2}, doubled {doubled:.2}, {:.1} s", secs(elapsed)),
    )
}

fn luminance_range() -> Outcome {
    let s1 = builtin_scenario("S1").unwrap();
    let rs = &s1.document.ruleset;
    let blind = rs.rule_index("open_blind_on_request").unwrap();
    let light = rs.rule_index("light_on_motion").unwrap();
    let (mut co_fired, mut enforced_out) = (0, 0);
    for seed in 0..20 {
        let free = run(&s1.with_seed(seed).with_enforcement(Enforcement::None)).map_err(|e| e.to_string())?;
        let room = free.room_index("room1").unwrap();
        for t in 0..free.horizon {
            let fired = |rule: usize| {
                free.commands
                    .iter()
                    .any(|c| c.tick == t && c.rule == rs.rules()[rule].id)
            };
            if !(fired(blind) && fired(light)) {
                continue;
            }
            co_fired += 1;
            let lux = free.samples[t as usize][room].luminance;
            if (200.0..=450.0).contains(&lux) {
                return Err(format!("seed {seed} tick {t}: luminance {lux} inside the band"));
            }
            let logged = free.conflicts.iter().any(|c| {
                c.tick.0 == t
                    && c.actions().is_some_and(|[a, b]| {
                        BTreeSet::from([a.rule_index, b.rule_index]) == BTreeSet::from([blind, light])
                    })
            });
            if !logged {
                return Err(format!("seed {seed} tick {t}: no conflict logged"));
            }
        }
        let enforced = run(&s1.with_seed(seed).with_enforcement(Enforcement::All)).map_err(|e| e.to_string())?;
        enforced_out += enforced.out_of_range_ticks;
    }
    check(
        co_fired > 0 && enforced_out == 0,
        format!(
            "{co_fired} co-fire ticks over 20 seeds, all out of band and logged; 0 out-of-band ticks with enforcement"
        ),
        || format!("{co_fired} co-fire ticks, {enforced_out} out-of-band ticks with enforcement"),
    )
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn conflict_trend() -> Outcome {
    let probabilities = [0.02, 0.04, 0.06, 0.08, 0.10];
    let mut means = Vec::new();
    for p in probabilities {
        let mut s = builtin_scenario("S1").unwrap().with_enforcement(Enforcement::None);
        s.set_probability("blind_request", p).unwrap();
        s.set_probability("motion", 0.10).unwrap();
        let total: usize = (0..50).map(|seed| run(&s.with_seed(seed)).unwrap().total_conflicts()).sum();
        means.push(total as f64 / 50.0);
    }
    let rho = spearman(&probabilities, &means);
    let listed = means.iter().fold(String::new(), |mut acc, m| {
        let _ = write!(acc, " {m:.2}");
        acc
    });
    check(
        rho > 0.0,
        format!("mean conflicts{listed} for p = 2%..10%, Spearman rho {rho:.2}"),
        || format!("means{listed}, rho {rho:.2}"),
    )
}

fn management_deltas() -> Outcome {
    let mut parts = Vec::new();
    for (id, kind) in [("S7", "thermostat"), ("S8", "humidifier")] {
        let mut means = [0.0; 2];
        for (slot, horizon) in [500u64, 2000].into_iter().enumerate() {
            let mut total = 0i64;
            for seed in 0..20 {
                let s = builtin_scenario(id).unwrap().with_seed(seed).with_horizon(horizon);
                let p = run_paired(&s, &s.document.ruleset, &s.document.config).map_err(|e| e.to_string())?;
                let extra = p.extra_actuations_of(kind);
                if extra < 0 {
                    return Err(format!("{id} seed {seed} horizon {horizon}: {extra} extra actuations"));
                }
                total += extra;
            }
            means[slot] = total as f64 / 20.0;
        }
        if means[1] <= means[0] {
            return Err(format!("{id}: mean {} at 2000 vs {} at 500", means[1], means[0]));
        }
        parts.push(format!("{id} {kind} +{:.2} at 500, +{:.2} at 2000", means[0], means[1]));
    }
    Ok(format!("{} (20 seeds each, no negative delta)", parts.join("; ")))
}

/// 50 rules, each on its own sensor, actuator and feature, except for five
/// seeded conflicting pairs and five decoy pairs that share an actuator or
/// dependent features but can never conflict.
fn seeded_fixture() -> (String, BTreeSet<(String, String)>) {
    let mut t = String::from("[registry]\nlocations = [\"home\"]\ncontrollers = [\"c0\", \"c1\", \"c2\"]\n");
    for i in 0..50 {
        let _ = write!(
            t,
            "\n[[registry.sensor_kinds]]\nname = \"k{i}\"\nunit = \"u\"\nmin = 0.0\nmax = 100.0\n\
             \n[[registry.sensors]]\nid = \"s{i}\"\nkind = \"k{i}\"\nlocation = \"home\"\n\
             \n[[registry.actuators]]\nid = \"a{i}\"\nkind = \"switch\"\nlocation = \"home\"\n\
             \n[[registry.features]]\nid = \"f{i}\"\nkind = \"q\"\nlocation = \"home\"\n"
        );
    }
    // An extra sensor of kind k30 next to s30.
    t.push_str("\n[[registry.sensors]]\nid = \"s30b\"\nkind = \"k30\"\nlocation = \"home\"\n");
    t.push_str("\n[detector]\noverlap_window = 5\nduplicate_window = 30\nsame_tick_epsilon = 0\nday_length = 864\n");
    t.push_str("\n[feature_deps]\nedges = [[\"f10\", \"f11\"], [\"f22\", \"f23\"], [\"f40\", \"f41\"], [\"f42\", \"f43\"], [\"f45\", \"f46\"]]\n");
    t.push_str("\n[action_relations.kinds.switch]\nactions = [\"on\", \"off\"]\nopposite = [[\"on\", \"off\"]]\n");

    struct R {
        kind: usize,
        actuator: usize,
        feature: usize,
        controller: usize,
        action: &'static str,
        schedule: Option<(u64, u64)>,
    }
    let mut rules: Vec<R> = (0..50)
        .map(|i| R {
            kind: i,
            actuator: i,
            feature: i,
            controller: i % 3,
            action: "on",
            schedule: None,
        })
        .collect();
    // Seeded: different controllers on one actuator.
    rules[1].actuator = 0;
    (rules[0].controller, rules[1].controller) = (0, 1);
    // Seeded: different controllers, dependent features.
    (rules[10].controller, rules[11].controller) = (0, 1);
    // Seeded: one controller, opposite actions on dependent features.
    (rules[22].controller, rules[23].controller) = (2, 2);
    rules[23].action = "off";
    // Seeded: one controller, one actuator, two sensors of one kind.
    rules[31].kind = 30;
    rules[31].actuator = 30;
    (rules[30].controller, rules[31].controller) = (1, 1);
    // Seeded: partly shared schedules on one actuator.
    rules[36].actuator = 35;
    (rules[35].controller, rules[36].controller) = (0, 2);
    rules[35].schedule = Some((100, 300));
    rules[36].schedule = Some((250, 500));
    // Decoy: disjoint schedules on one actuator.
    rules[3].actuator = 2;
    rules[2].schedule = Some((0, 400));
    rules[3].schedule = Some((500, 800));
    // Decoy: disjoint schedules, dependent features.
    rules[40].schedule = Some((600, 700));
    rules[41].schedule = Some((100, 200));
    // Decoy: opposite actions, dependent features, wrapped schedules apart.
    rules[43].action = "off";
    rules[42].schedule = Some((800, 50));
    rules[43].schedule = Some((300, 400));
    // Decoy: one controller, dependent features, compatible actions.
    (rules[45].controller, rules[46].controller) = (2, 2);
    // Decoy: same actuator and controller, schedules a day-part apart.
    rules[48].actuator = 47;
    (rules[47].controller, rules[48].controller) = (1, 1);
    rules[47].schedule = Some((10, 20));
    rules[48].schedule = Some((200, 210));

    for (i, r) in rules.iter().enumerate() {
        let schedule = r
            .schedule
            .map_or(String::new(), |(s, e)| format!(", schedule = {{ start = {s}, end = {e} }}"));
        let _ = write!(
            t,
            "\n[[rules]]\nid = \"r{i}\"\ncontroller = \"c{}\"\n\
             trigger = {{ sensor_kind = \"k{}\", comparator = \">\", threshold = 50.0, unit = \"u\", location = \"home\"{schedule} }}\n\
             action = {{ actuator = \"a{}\", action = \"{}\", affected_features = [\"f{}\"] }}\n",
            r.controller, r.kind, r.actuator, r.action, r.feature
        );
    }
    let seeded = [(0, 1), (10, 11), (22, 23), (30, 31), (35, 36)]
        .into_iter()
        .map(|(a, b)| (format!("r{a}"), format!("r{b}")))
        .collect();
    (t, seeded)
}

fn seeded_misconfiguration() -> Outcome {
    let (text, seeded) = seeded_fixture();
    let doc = Document::parse(&text).map_err(|e| e.to_string())?;
    if doc.ruleset.rules().len() != 50 {
        return Err(format!("fixture has {} rules", doc.ruleset.rules().len()));
    }
    let found = static_check(&doc.ruleset, &doc.config);
    let pairs: BTreeSet<(String, String)> = found
        .iter()
        .map(|p| (p.rule_a.to_string(), p.rule_b.to_string()))
        .collect();
    let brute = oracle_static(&doc.ruleset, &doc.config);
    let kinds: BTreeSet<&str> = found.iter().map(|p| p.kind.as_str()).collect();
    check(
        pairs == seeded && found == brute,
        format!(
            "{} pairs recovered ({} findings over {}), none extra, equal to brute force",
            pairs.len(),
            found.len(),
            kinds.into_iter().collect::<Vec<_>>().join("/")
        ),
        || format!("found {pairs:?}, brute force equal: {}", found == brute),
    )
}

fn scalability() -> Outcome {
    const LOCATIONS: usize = 100;
    const KINDS: usize = 10;
    const PER_ROOM: usize = 10;
    const TICKS: u64 = 10;
    let mut t = String::from("[registry]\nlocations = [");
    t.push_str(&(0..LOCATIONS).map(|l| format!("\"l{l}\"")).collect::<Vec<_>>().join(", "));
    t.push_str("]\ncontrollers = [");
    t.push_str(&(0..20).map(|c| format!("\"c{c}\"")).collect::<Vec<_>>().join(", "));
    t.push_str("]\n");
    for k in 0..KINDS {
        let _ = write!(t, "\n[[registry.sensor_kinds]]\nname = \"k{k}\"\nunit = \"u\"\nmin = 0.0\nmax = 100.0\n");
    }
    for l in 0..LOCATIONS {
        for k in 0..KINDS {
            let _ = write!(t, "\n[[registry.sensors]]\nid = \"s{l}_{k}\"\nkind = \"k{k}\"\nlocation = \"l{l}\"\n");
        }
        for j in 0..PER_ROOM {
            let _ = write!(
                t,
                "\n[[registry.actuators]]\nid = \"a{l}_{j}\"\nkind = \"switch\"\nlocation = \"l{l}\"\n\
                 \n[[registry.features]]\nid = \"f{l}_{j}\"\nkind = \"q\"\nlocation = \"l{l}\"\n"
            );
        }
    }
    t.push_str("\n[action_relations.kinds.switch]\nactions = [\"on\", \"off\"]\nopposite = [[\"on\", \"off\"]]\n");
    let mut n_rules = 0;
    for j in 0..PER_ROOM {
        for k in 0..KINDS {
            for l in 0..LOCATIONS {
                let r = l + LOCATIONS * (k + KINDS * j);
                let a = (j + k) % PER_ROOM;
                let (cmp, action) = if j % 2 == 0 { (">", "on") } else { ("<", "off") };
                let _ = write!(
                    t,
                    "\n[[rules]]\nid = \"r{r}\"\ncontroller = \"c{}\"\n\
                     trigger = {{ sensor_kind = \"k{k}\", comparator = \"{cmp}\", threshold = 50.0, unit = \"u\", location = \"l{l}\" }}\n\
                     action = {{ actuator = \"a{l}_{a}\", action = \"{action}\", affected_features = [\"f{l}_{a}\"] }}\n",
                    r % 20
                );
                n_rules += 1;
            }
        }
    }
    let doc = Document::parse(&t).map_err(|e| e.to_string())?;
    let sensors = doc.ruleset.registry().sensors();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut detector = Detector::new(&doc.ruleset, &doc.config).map_err(|e| e.to_string())?;
    let (mut worst, mut total, mut events_seen, mut conflicts) = (Duration::ZERO, Duration::ZERO, 0, 0);
    let mut id = 0;
    for tick in 0..TICKS {
        let batch: Vec<Event> = sensors
            .iter()
            .map(|s| {
                let value: f64 = rng.gen_range(0.0..100.0);
                id += 1;
                Event {
                    id: EventId(id),
                    sensor: s.id.clone(),
                    time: TimeStamp(tick),
                    value,
                    signature: EventSignature {
                        sensor_kind: s.kind.clone(),
                        predicate: if value > 50.0 { PredicateClass::GreaterThan } else { PredicateClass::LessThan },
                        location: s.location.clone(),
                    },
                }
            })
            .collect();
        let start = Instant::now();
        let found: Vec<Conflict> = detector.detect_at_tick(TimeStamp(tick), &batch).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        worst = worst.max(elapsed);
        total += elapsed;
        events_seen += batch.len();
        conflicts += found.len();
    }
    let per_tick = total / TICKS as u32;
    check(
        n_rules == 10_000 && events_seen == 1000 * TICKS as usize && worst < Duration::from_secs(1),
        format!(
            "{n_rules} rules, 1000 events/tick: mean {:.1} ms/tick, worst {:.1} ms, {:.0} events/s, {conflicts} conflicts over {TICKS} ticks",
            secs(per_tick) * 1e3,
            secs(worst) * 1e3,
            events_seen as f64 / secs(total)
        ),
        || format!("worst tick {:.1} ms with {n_rules} rules", secs(worst) * 1e3),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("detector equals oracle on random cases", oracle_equivalence),
        ("duplicate reading raises a setpoint once", duplicate_setpoint),
        ("alarm co-trigger count matches its expectation", alarm_co_trigger),
        ("co-fired blind and light leave the luminance band", luminance_range),
        ("conflicts grow with event probability", conflict_trend),
        ("management rules cost extra actuations", management_deltas),
        ("static check recovers seeded pairs", seeded_misconfiguration),
        ("detector keeps up with 10k rules", scalability),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {} {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
