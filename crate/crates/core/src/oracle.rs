//! Brute-force reference implementations of the online and static checks.
//!
//! Nothing here shares evaluation code with the detector: rules are matched
//! by a literal reading of the trigger, feature dependency comes from a
//! Floyd-Warshall closure, every pair of triggered actions in the whole trace
//! is tested, and the static reference searches concrete event pairs.

use std::collections::{BTreeSet, HashMap};

use crate::detector::{Conflict, ConflictKind, PotentialConflict, TriggeredAction};
use crate::model::{
    overlapping_events, Comparator, DetectorConfig, Event, EventId, EventSignature, FeatureId,
    PredicateClass, Relation, Rule, RuleSet, SensorDecl, TimeStamp,
};

struct Context<'a> {
    rs: &'a RuleSet,
    cfg: &'a DetectorConfig,
    feature_index: HashMap<&'a FeatureId, usize>,
    /// `reach[a][b]`: b reachable from a through at least one edge.
    reach: Vec<Vec<bool>>,
}

impl<'a> Context<'a> {
    fn new(rs: &'a RuleSet, cfg: &'a DetectorConfig) -> Self {
        let nodes: Vec<&FeatureId> = cfg.dependency_graph.nodes().iter().collect();
        let feature_index: HashMap<&FeatureId, usize> =
            nodes.iter().enumerate().map(|(i, f)| (*f, i)).collect();
        let n = nodes.len();
        let mut reach = vec![vec![false; n]; n];
        for (a, b) in cfg.dependency_graph.edges() {
            reach[feature_index[a]][feature_index[b]] = true;
        }
        #[allow(clippy::needless_range_loop)]
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        Context {
            rs,
            cfg,
            feature_index,
            reach,
        }
    }

    fn fires(&self, rule: &Rule, e: &Event) -> bool {
        let t = &rule.trigger;
        if t.sensor_kind != e.signature.sensor_kind {
            return false;
        }
        let value_ok = match t.comparator {
            Comparator::Greater => e.value > t.threshold,
            Comparator::Less => e.value < t.threshold,
            Comparator::Equal => e.value == t.threshold,
        };
        let place_ok = match &t.location {
            Some(loc) => *loc == e.signature.location,
            None => true,
        };
        let time_ok = match t.schedule {
            Some(s) => {
                let tod = e.time.0 % self.cfg.day_length;
                if s.start < s.end {
                    s.start <= tod && tod < s.end
                } else {
                    tod >= s.start || tod < s.end
                }
            }
            None => true,
        };
        value_ok && place_ok && time_ok
    }

    fn trigger(&self, e: &Event) -> Vec<TriggeredAction> {
        let mut out = Vec::new();
        for (i, rule) in self.rs.rules().iter().enumerate() {
            if self.fires(rule, e) {
                out.push(TriggeredAction {
                    event: e.clone(),
                    rule: rule.id.clone(),
                    rule_index: i,
                    controller: rule.controller.clone(),
                    action: rule.action.clone(),
                    time: e.time,
                });
            }
        }
        out
    }

    fn features_related(&self, x: &TriggeredAction, y: &TriggeredAction) -> bool {
        x.action.affected_features.iter().any(|f| {
            y.action.affected_features.iter().any(|g| {
                let (a, b) = (self.feature_index[f], self.feature_index[g]);
                a == b || self.reach[a][b] || self.reach[b][a]
            })
        })
    }

    fn relation(&self, x: &TriggeredAction, y: &TriggeredAction) -> Relation {
        let registry = self.rs.registry();
        let kind_of = |ta: &TriggeredAction| {
            registry
                .actuator(ta.action.actuator.as_str())
                .expect("ruleset integrity")
                .kind
                .clone()
        };
        self.cfg
            .action_relations
            .relation_between(
                kind_of(x).as_str(),
                x.action.action.as_str(),
                kind_of(y).as_str(),
                y.action.action.as_str(),
            )
            .expect("validated vocabulary")
    }

    /// Literal reading of policies C1..C6 for one pair of distinct actions.
    fn pair_kinds(&self, x: &TriggeredAction, y: &TriggeredAction) -> Vec<ConflictKind> {
        let dt = x.time.0.abs_diff(y.time.0);
        let at_same_time = dt <= self.cfg.same_tick_epsilon;
        let overlap = overlapping_events(&x.event, &y.event, self.cfg);
        let disjoint = !overlap;
        let same_actuator = x.action.actuator == y.action.actuator;
        let other_controller = x.controller != y.controller;
        let relation = self.relation(x, y);
        let related = self.features_related(x, y);

        let mut kinds = Vec::new();
        if same_actuator && other_controller && at_same_time {
            kinds.push(ConflictKind::C1);
        }
        if !same_actuator && other_controller && at_same_time && related {
            kinds.push(ConflictKind::C2);
        }
        if overlap
            && same_actuator
            && (matches!(
                relation,
                Relation::Different | Relation::Opposite | Relation::Dependent
            ) || (relation == Relation::Same && dt > 0))
        {
            kinds.push(ConflictKind::C3);
        }
        if overlap && relation == Relation::Opposite && related {
            kinds.push(ConflictKind::C4);
        }
        if disjoint && at_same_time && same_actuator {
            kinds.push(ConflictKind::C5);
        }
        if disjoint && at_same_time && relation == Relation::Opposite && related {
            kinds.push(ConflictKind::C6);
        }
        kinds
    }

    fn tolerance(&self, e: &Event) -> f64 {
        self.rs
            .registry()
            .sensor(e.sensor.as_str())
            .map_or(0.0, |s| s.tolerance)
    }
}

/// Every conflict in `trace`, sorted by [`Conflict::key`].
pub fn oracle_detect(trace: &[Event], rs: &RuleSet, cfg: &DetectorConfig) -> Vec<Conflict> {
    let ctx = Context::new(rs, cfg);
    let actions: Vec<TriggeredAction> = trace.iter().flat_map(|e| ctx.trigger(e)).collect();

    let mut found = Vec::new();
    for i in 0..actions.len() {
        for j in i + 1..actions.len() {
            for kind in ctx.pair_kinds(&actions[i], &actions[j]) {
                found.push(Conflict::between_actions(
                    kind,
                    actions[i].clone(),
                    actions[j].clone(),
                ));
            }
        }
    }

    for (i, a) in trace.iter().enumerate() {
        for b in &trace[i + 1..] {
            let dt = a.time.0.abs_diff(b.time.0);
            if a.sensor == b.sensor
                && a.signature == b.signature
                && (a.value - b.value).abs() <= ctx.tolerance(a)
                && dt > 0
                && dt <= cfg.duplicate_window
            {
                found.push(Conflict::duplicate_events(a.clone(), b.clone()));
            }
        }
    }

    found.sort_by_key(Conflict::key);
    found.dedup_by_key(|c| c.key());
    found
}

const PREDICATES: [PredicateClass; 3] = [
    PredicateClass::GreaterThan,
    PredicateClass::LessThan,
    PredicateClass::EqualTo,
];

/// Candidate values for a sensor kind: every threshold on that kind, one unit
/// either side, midpoints between neighbouring thresholds and the declared
/// range ends.
fn value_grid(rs: &RuleSet, kind: &str) -> Vec<f64> {
    let mut thresholds: Vec<f64> = rs
        .rules()
        .iter()
        .filter(|r| r.trigger.sensor_kind.as_str() == kind)
        .map(|r| r.trigger.threshold)
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut grid = Vec::new();
    for (i, &t) in thresholds.iter().enumerate() {
        grid.extend([t - 1.0, t, t + 1.0]);
        if let Some(&next) = thresholds.get(i + 1) {
            grid.push((t + next) / 2.0);
        }
    }
    if let Some(decl) = rs.registry().sensor_kind(kind) {
        grid.extend([decl.min, decl.max]);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn event_from(id: u64, sensor: &SensorDecl, time: u64, value: f64, p: PredicateClass) -> Event {
    Event {
        id: EventId(id),
        sensor: sensor.id.clone(),
        time: TimeStamp(time),
        value,
        signature: EventSignature {
            sensor_kind: sensor.kind.clone(),
            predicate: p,
            location: sensor.location.clone(),
        },
    }
}

/// Static reference: a rule pair is reported for a policy when some concrete
/// pair of events (sensors, ticks, values and predicate classes drawn from
/// finite grids) makes the policy fire for an action of each rule.
pub fn oracle_static(rs: &RuleSet, cfg: &DetectorConfig) -> Vec<PotentialConflict> {
    let ctx = Context::new(rs, cfg);
    let sensors = rs.registry().sensors();
    let day = cfg.day_length;
    // Offsets beyond one day only repeat times of day already covered, and
    // both windows are monotone in the offset.
    let reach = cfg.overlap_window.max(cfg.same_tick_epsilon).min(day) as i64;
    let grids: HashMap<&str, Vec<f64>> = rs
        .registry()
        .sensor_kinds()
        .iter()
        .map(|k| (k.name.as_str(), value_grid(rs, k.name.as_str())))
        .collect();

    let rules = rs.rules();
    let mut out = BTreeSet::new();
    for i in 0..rules.len() {
        for j in i + 1..rules.len() {
            let (ri, rj) = (&rules[i], &rules[j]);
            let probe = |rule: &Rule, idx: usize| TriggeredAction {
                event: Event::new(0, "", 0, 0.0, "", PredicateClass::EqualTo, ""),
                rule: rule.id.clone(),
                rule_index: idx,
                controller: rule.controller.clone(),
                action: rule.action.clone(),
                time: TimeStamp(0),
            };
            let (pi, pj) = (probe(ri, i), probe(rj, j));
            let same_actuator = ri.action.actuator == rj.action.actuator;
            let opposite = ctx.relation(&pi, &pj) == Relation::Opposite;
            let related = ctx.features_related(&pi, &pj);
            let other_controller = ri.controller != rj.controller;
            let mut possible = BTreeSet::new();
            if same_actuator {
                possible.extend([ConflictKind::C3, ConflictKind::C5]);
                if other_controller {
                    possible.insert(ConflictKind::C1);
                }
            }
            if related && opposite {
                possible.extend([ConflictKind::C4, ConflictKind::C6]);
            }
            if related && other_controller && !same_actuator {
                possible.insert(ConflictKind::C2);
            }
            if possible.is_empty() {
                continue;
            }

            let mut kinds = BTreeSet::new();
            'search: for s1 in sensors.iter().filter(|s| s.kind == ri.trigger.sensor_kind) {
                for s2 in sensors.iter().filter(|s| s.kind == rj.trigger.sensor_kind) {
                    let grid1 = &grids[s1.kind.as_str()];
                    let grid2 = &grids[s2.kind.as_str()];
                    for t1 in day..2 * day {
                        for delta in -reach..=reach {
                            let t2 = (t1 as i64 + delta) as u64;
                            let mut pairs = Vec::new();
                            if s1.id == s2.id && t1 == t2 {
                                for &v in grid1 {
                                    for p in PREDICATES {
                                        let e = event_from(0, s1, t1, v, p);
                                        if ctx.fires(ri, &e) && ctx.fires(rj, &e) {
                                            pairs.push((e.clone(), e));
                                        }
                                    }
                                }
                            } else {
                                let first = |grid: &[f64], s, t, rule| {
                                    grid.iter()
                                        .copied()
                                        .find(|&v| {
                                            ctx.fires(rule, &event_from(0, s, t, v, PredicateClass::EqualTo))
                                        })
                                };
                                let (Some(v1), Some(v2)) =
                                    (first(grid1, s1, t1, ri), first(grid2, s2, t2, rj))
                                else {
                                    continue;
                                };
                                for p1 in PREDICATES {
                                    for p2 in PREDICATES {
                                        pairs.push((
                                            event_from(0, s1, t1, v1, p1),
                                            event_from(1, s2, t2, v2, p2),
                                        ));
                                    }
                                }
                            }
                            for (e1, e2) in pairs {
                                let x = TriggeredAction {
                                    time: e1.time,
                                    event: e1,
                                    ..pi.clone()
                                };
                                let y = TriggeredAction {
                                    time: e2.time,
                                    event: e2,
                                    ..pj.clone()
                                };
                                kinds.extend(ctx.pair_kinds(&x, &y));
                            }
                            if kinds == possible {
                                break 'search;
                            }
                        }
                    }
                }
            }
            for kind in kinds {
                out.insert(PotentialConflict::new(rs, kind, i, j));
            }
        }
    }
    out.into_iter().collect()
}
