//! Random rulesets and traces for property tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use iot_conflict::model::{
    ActionRelationTable, ActionSpec, ActuatorDecl, Comparator, DetectorConfig, Document, Event,
    EventId, EventSignature, FeatureDecl, FeatureDependencyGraph, FeatureId, PredicateClass,
    Registry, Relation, Rule, RuleSet, Schedule, SensorDecl, SensorKindDecl, TimeStamp,
    TriggerCondition,
};
use proptest::prelude::*;

const KINDS: [&str; 3] = ["k0", "k1", "k2"];
const LOCATIONS: [&str; 3] = ["l0", "l1", "l2"];
const CONTROLLERS: [&str; 3] = ["c0", "c1", "c2"];
const A0: [&str; 3] = ["x", "y", "z"];
const A1: [&str; 2] = ["p", "q"];
const RELATIONS: [Option<Relation>; 4] = [
    None,
    Some(Relation::Opposite),
    Some(Relation::Dependent),
    Some(Relation::Different),
];
const PREDICATES: [PredicateClass; 3] = [
    PredicateClass::GreaterThan,
    PredicateClass::LessThan,
    PredicateClass::EqualTo,
];
const COMPARATORS: [Comparator; 3] = [Comparator::Greater, Comparator::Less, Comparator::Equal];

#[derive(Debug, Clone)]
pub struct World {
    n_loc: usize,
    n_kind: usize,
    sensors: Vec<(usize, usize, bool)>,
    actuators: Vec<(usize, usize)>,
    a0_relations: [usize; 3],
    a1_relation: usize,
    cross_relation: usize,
    n_features: usize,
    edges: Vec<(usize, usize)>,
    rules: Vec<RawRule>,
    windows: (u64, u64, u64),
    day_length: u64,
    similar_kinds: bool,
    similar_locations: bool,
}

#[derive(Debug, Clone)]
struct RawRule {
    kind: usize,
    comparator: usize,
    threshold: u8,
    location: Option<usize>,
    schedule: Option<(u64, u64)>,
    controller: usize,
    actuator: usize,
    action: usize,
    features: (usize, Option<usize>),
}

fn raw_rule() -> impl Strategy<Value = RawRule> {
    (
        (0..3usize, 0..3usize, 0..=10u8, proptest::option::weighted(0.4, 0..3usize)),
        proptest::option::weighted(0.3, (0..1000u64, 1..1000u64)),
        (0..3usize, 0..4usize, 0..3usize),
        (0..4usize, proptest::option::of(0..4usize)),
    )
        .prop_map(
            |((kind, comparator, threshold, location), schedule, (controller, actuator, action), features)| {
                RawRule {
                    kind,
                    comparator,
                    threshold,
                    location,
                    schedule,
                    controller,
                    actuator,
                    action,
                    features,
                }
            },
        )
}

/// Rulesets of up to `max_rules` rules over a small random house; schedule
/// windows are drawn from `day_lengths`.
pub fn world(max_rules: usize, day_lengths: &'static [u64]) -> impl Strategy<Value = World> {
    (
        (1..=3usize, 1..=3usize),
        proptest::collection::vec((0..3usize, 0..3usize, proptest::bool::weighted(0.3)), 1..=5),
        proptest::collection::vec((0..2usize, 0..3usize), 1..=4),
        ([0..4usize, 0..4usize, 0..4usize], 0..4usize, 0..4usize),
        (1..=4usize, proptest::collection::vec((0..4usize, 0..4usize), 0..4)),
        proptest::collection::vec(raw_rule(), 0..=max_rules),
        ((1..=6u64, 1..=12u64, 0..=2u64), proptest::sample::select(day_lengths)),
        (any::<bool>(), any::<bool>()),
    )
        .prop_map(
            |(
                (n_loc, n_kind),
                sensors,
                actuators,
                (a0_relations, a1_relation, cross_relation),
                (n_features, edges),
                rules,
                (windows, day_length),
                (similar_kinds, similar_locations),
            )| World {
                n_loc,
                n_kind,
                sensors,
                actuators,
                a0_relations,
                a1_relation,
                cross_relation,
                n_features,
                edges,
                rules,
                windows,
                day_length,
                similar_kinds,
                similar_locations,
            },
        )
}

fn feature(i: usize) -> FeatureId {
    FeatureId::new(format!("f{i}"))
}

impl World {
    pub fn document(&self) -> Document {
        let loc = |i: usize| LOCATIONS[i % self.n_loc];
        let kind = |i: usize| KINDS[i % self.n_kind];
        let registry = Registry::new(
            LOCATIONS[..self.n_loc].iter().map(|&l| l.into()).collect(),
            CONTROLLERS.iter().map(|&c| c.into()).collect(),
            KINDS[..self.n_kind]
                .iter()
                .map(|&k| SensorKindDecl {
                    name: k.into(),
                    unit: "u".into(),
                    min: 0.0,
                    max: 10.0,
                })
                .collect(),
            self.sensors
                .iter()
                .enumerate()
                .map(|(i, &(k, l, tolerant))| SensorDecl {
                    id: format!("s{i}").into(),
                    kind: kind(k).into(),
                    location: loc(l).into(),
                    tolerance: if tolerant { 0.5 } else { 0.0 },
                })
                .collect(),
            self.actuators
                .iter()
                .enumerate()
                .map(|(i, &(k, l))| ActuatorDecl {
                    id: format!("act{i}").into(),
                    kind: ["a0", "a1"][k].into(),
                    location: loc(l).into(),
                })
                .collect(),
            (0..self.n_features)
                .map(|i| FeatureDecl {
                    id: feature(i),
                    kind: "q".into(),
                    location: loc(i).into(),
                })
                .collect(),
        )
        .expect("generated registry is valid");

        let mut relations = ActionRelationTable::new();
        relations.declare_kind("a0", A0).unwrap();
        relations.declare_kind("a1", A1).unwrap();
        for (r, (a, b)) in self.a0_relations.iter().zip([("x", "y"), ("x", "z"), ("y", "z")]) {
            if let Some(rel) = RELATIONS[*r] {
                relations.relate("a0", a, b, rel).unwrap();
            }
        }
        if let Some(rel) = RELATIONS[self.a1_relation] {
            relations.relate("a1", "p", "q", rel).unwrap();
        }
        if let Some(rel) = RELATIONS[self.cross_relation] {
            relations
                .relate_across(("a0".into(), "x".into()), ("a1".into(), "p".into()), rel)
                .unwrap();
        }

        let graph = FeatureDependencyGraph::new(
            (0..self.n_features).map(feature),
            self.edges
                .iter()
                .map(|&(a, b)| (a % self.n_features, b % self.n_features))
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (feature(a), feature(b))),
        )
        .unwrap();

        let mut cfg = DetectorConfig::new(graph, relations);
        (cfg.overlap_window, cfg.duplicate_window, cfg.same_tick_epsilon) = self.windows;
        cfg.day_length = self.day_length;
        if self.similar_kinds && self.n_kind >= 2 {
            cfg.similarity.kinds.push(["k0".into(), "k1".into()].into());
        }
        if self.similar_locations && self.n_loc >= 2 {
            cfg.similarity.locations.push(["l0".into(), "l1".into()].into());
        }

        let rules = self
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let a = r.actuator % self.actuators.len();
                let (akind, aloc) = self.actuators[a];
                let action = if akind == 0 { A0[r.action % 3] } else { A1[r.action % 2] };
                let mut features: BTreeSet<usize> = BTreeSet::new();
                features.insert(r.features.0 % self.n_features);
                if let Some(f) = r.features.1 {
                    features.insert(f % self.n_features);
                }
                let schedule = r.schedule.and_then(|(s, len)| {
                    let d = self.day_length;
                    if d < 2 {
                        return None;
                    }
                    let start = s % d;
                    let end = (start + 1 + len % (d - 1)) % d;
                    let sched = Schedule { start, end };
                    sched.validate(d).ok().map(|_| sched)
                });
                Rule {
                    id: format!("r{i}").into(),
                    controller: CONTROLLERS[r.controller].into(),
                    trigger: TriggerCondition {
                        sensor_kind: kind(r.kind).into(),
                        comparator: COMPARATORS[r.comparator],
                        threshold: f64::from(r.threshold),
                        unit: "u".into(),
                        location: r.location.map(|l| loc(l).into()),
                        schedule,
                    },
                    action: ActionSpec {
                        actuator: format!("act{a}").into(),
                        action: action.into(),
                        location: loc(aloc).into(),
                        affected_features: features.into_iter().map(feature).collect(),
                    },
                }
            })
            .collect();
        let rs = RuleSet::new(registry, rules).expect("generated ruleset is valid");
        Document::new(rs, cfg).expect("generated document is valid")
    }
}

/// Per tick: gap from the previous tick, then (sensor, half-unit value, predicate).
pub type RawTrace = Vec<(u64, Vec<(usize, u8, usize)>)>;

pub fn raw_trace(max_ticks: usize) -> impl Strategy<Value = RawTrace> {
    proptest::collection::vec(
        (
            0..=4u64,
            proptest::collection::vec((0..5usize, 0..=20u8, 0..3usize), 0..=3),
        ),
        0..=max_ticks,
    )
}

/// Events from the registry's sensors, with their declared kind and
/// location. With `one_per_sensor`, repeated sensors within a tick are
/// dropped.
pub fn build_trace(doc: &Document, raw: &RawTrace, one_per_sensor: bool) -> Vec<Event> {
    let sensors = doc.ruleset.registry().sensors();
    let mut events = Vec::new();
    let mut t = 0;
    let mut seen = BTreeSet::new();
    for (gap, readings) in raw {
        if *gap > 0 {
            seen.clear();
        }
        t += gap;
        for &(s, v, p) in readings {
            let s = &sensors[s % sensors.len()];
            if one_per_sensor && !seen.insert(s.id.clone()) {
                continue;
            }
            events.push(Event {
                id: EventId(events.len() as u64),
                sensor: s.id.clone(),
                time: TimeStamp(t),
                value: f64::from(v) / 2.0,
                signature: EventSignature {
                    sensor_kind: s.kind.clone(),
                    predicate: PREDICATES[p],
                    location: s.location.clone(),
                },
            });
        }
    }
    events
}

pub fn case(
    max_rules: usize,
    day_lengths: &'static [u64],
    max_ticks: usize,
) -> impl Strategy<Value = (Document, Vec<Event>)> {
    (world(max_rules, day_lengths), raw_trace(max_ticks)).prop_map(|(w, raw)| {
        let doc = w.document();
        let events = build_trace(&doc, &raw, false);
        (doc, events)
    })
}
