//! Pairwise ruleset analysis: which rule pairs can violate a policy at all.
//!
//! Events are assumed to come from declared sensors, carry the sensor's kind
//! and location, and at most one reading per sensor per tick; values and
//! predicate classes are unconstrained. Under that model a pair of rules is
//! reported for a policy exactly when some event stream makes the detector
//! raise that policy for an action of each rule.

use crate::model::{
    ActuatorId, Comparator, ControllerId, LocationId, DetectorConfig, RuleId, RuleSet, Schedule,
};

use super::ConflictKind;

/// A policy a pair of rules would violate if both fired within the relevant
/// window.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PotentialConflict {
    /// Positions of the two rules in the ruleset, lower first.
    pub rules: (usize, usize),
    pub kind: ConflictKind,
    pub rule_a: RuleId,
    pub rule_b: RuleId,
    pub controllers: (ControllerId, ControllerId),
    pub actuators: (ActuatorId, ActuatorId),
    pub note: String,
}

impl PotentialConflict {
    pub(crate) fn new(rs: &RuleSet, kind: ConflictKind, a: usize, b: usize) -> Self {
        let (a, b) = (a.min(b), a.max(b));
        let (ra, rb) = (&rs.rules()[a], &rs.rules()[b]);
        let window = match kind {
            ConflictKind::C3 | ConflictKind::C4 => "on overlapping events",
            _ => "at the same time",
        };
        let note = if ra.action.actuator == rb.action.actuator {
            format!(
                "{} ({}) and {} ({}) can both command {} {window}",
                ra.id, ra.controller, rb.id, rb.controller, ra.action.actuator
            )
        } else {
            format!(
                "{} ({}) on {} and {} ({}) on {} can act on related features {window}",
                ra.id,
                ra.controller,
                ra.action.actuator,
                rb.id,
                rb.controller,
                rb.action.actuator
            )
        };
        PotentialConflict {
            kind,
            rules: (a, b),
            rule_a: ra.id.clone(),
            rule_b: rb.id.clone(),
            controllers: (ra.controller.clone(), rb.controller.clone()),
            actuators: (ra.action.actuator.clone(), rb.action.actuator.clone()),
            note,
        }
    }
}

/// Value set a trigger accepts, as an interval with open or closed ends.
#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    lo_closed: bool,
    hi: f64,
    hi_closed: bool,
}

impl Interval {
    fn of(comparator: Comparator, threshold: f64) -> Self {
        match comparator {
            Comparator::Greater => Interval {
                lo: threshold,
                lo_closed: false,
                hi: f64::INFINITY,
                hi_closed: false,
            },
            Comparator::Less => Interval {
                lo: f64::NEG_INFINITY,
                lo_closed: false,
                hi: threshold,
                hi_closed: false,
            },
            Comparator::Equal => Interval {
                lo: threshold,
                lo_closed: true,
                hi: threshold,
                hi_closed: true,
            },
        }
    }

    fn intersects(&self, other: &Interval) -> bool {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        lo < hi || (lo == hi && lo_closed && hi_closed)
    }
}

struct RuleFacts {
    sensors: Vec<usize>,
    /// Non-wrapping active pieces of the day; `None` means always active.
    active: Option<Vec<(u64, u64)>>,
    values: Interval,
    features: Vec<usize>,
}

struct Analysis<'a> {
    rs: &'a RuleSet,
    cfg: &'a DetectorConfig,
    facts: Vec<RuleFacts>,
    sensor_locations: Vec<&'a LocationId>,
}

impl Analysis<'_> {
    /// Whether rule `i` can be active at some tick `t` while rule `j` is
    /// active at `t + delta`.
    fn schedules_meet(&self, i: usize, j: usize, delta: i64) -> bool {
        let (Some(a), Some(b)) = (&self.facts[i].active, &self.facts[j].active) else {
            return true;
        };
        let day = self.cfg.day_length;
        let shift = delta.rem_euclid(day as i64) as u64;
        a.iter().any(|&(start, end)| {
            let (s, e) = (start + shift, end + shift);
            let pieces = if e <= day {
                [(s, e), (0, 0)]
            } else if s >= day {
                [(s - day, e - day), (0, 0)]
            } else {
                [(s, day), (0, e - day)]
            };
            pieces.iter().any(|&(ps, pe)| {
                ps < pe && b.iter().any(|&(bs, be)| ps.max(bs) < pe.min(be))
            })
        })
    }

    /// Some offset in `[-reach, reach]` (excluding zero unless allowed)
    /// lets both schedules be active.
    fn schedules_meet_within(&self, i: usize, j: usize, reach: u64, allow_zero: bool) -> bool {
        let day = self.cfg.day_length;
        if reach >= day {
            // Offsets of plus or minus one day make every residue reachable
            // without a zero offset.
            return (0..day as i64).any(|d| self.schedules_meet(i, j, d));
        }
        let reach = reach as i64;
        (-reach..=reach).any(|d| (d != 0 || allow_zero) && self.schedules_meet(i, j, d))
    }

    fn simultaneous(&self, i: usize, j: usize) -> bool {
        let (fi, fj) = (&self.facts[i], &self.facts[j]);
        let eps = self.cfg.same_tick_epsilon;
        let distinct = fi.sensors.iter().any(|s| fj.sensors.iter().any(|t| s != t));
        let shared = fi.sensors.iter().any(|s| fj.sensors.contains(s));
        (distinct && self.schedules_meet_within(i, j, eps, true))
            || (shared && self.schedules_meet_within(i, j, eps, false))
            || (shared && self.schedules_meet(i, j, 0) && fi.values.intersects(&fj.values))
    }

    fn overlapping(&self, i: usize, j: usize, need_gap: bool) -> bool {
        let rules = self.rs.rules();
        let similarity = &self.cfg.similarity;
        if !similarity.kinds_similar(&rules[i].trigger.sensor_kind, &rules[j].trigger.sensor_kind) {
            return false;
        }
        let (fi, fj) = (&self.facts[i], &self.facts[j]);
        let mut distinct = false;
        let mut shared = false;
        for &s in &fi.sensors {
            for &t in &fj.sensors {
                if s == t {
                    shared = true;
                } else if similarity
                    .locations_similar(self.sensor_locations[s], self.sensor_locations[t])
                {
                    distinct = true;
                }
            }
        }
        let w = self.cfg.overlap_window;
        (distinct && self.schedules_meet_within(i, j, w, !need_gap))
            || (shared && self.schedules_meet_within(i, j, w, false))
    }

    fn features_related(&self, i: usize, j: usize, closure: &crate::model::DependencyClosure) -> bool {
        self.facts[i]
            .features
            .iter()
            .any(|&f| self.facts[j].features.iter().any(|&g| closure.related(f, g)))
    }
}

/// Every (rule pair, policy) the ruleset can violate, ordered by rule
/// positions then policy. Pairs of a rule with itself are not reported.
pub fn static_check(rs: &RuleSet, cfg: &DetectorConfig) -> Vec<PotentialConflict> {
    use ConflictKind::*;
    let registry = rs.registry();
    let closure = cfg.dependency_graph.closure();
    let facts: Vec<RuleFacts> = rs
        .rules()
        .iter()
        .map(|rule| RuleFacts {
            sensors: registry
                .sensors()
                .iter()
                .enumerate()
                .filter(|(_, s)| {
                    s.kind == rule.trigger.sensor_kind
                        && rule.trigger.location.as_ref().is_none_or(|l| *l == s.location)
                })
                .map(|(i, _)| i)
                .collect(),
            active: rule
                .trigger
                .schedule
                .map(|s: Schedule| s.intervals(cfg.day_length)),
            values: Interval::of(rule.trigger.comparator, rule.trigger.threshold),
            features: rule
                .action
                .affected_features
                .iter()
                .filter_map(|f| closure.index_of(f.as_str()))
                .collect(),
        })
        .collect();
    let analysis = Analysis {
        rs,
        cfg,
        facts,
        sensor_locations: registry.sensors().iter().map(|s| &s.location).collect(),
    };

    let actuator_kind = |i: usize| {
        let id = &rs.rules()[i].action.actuator;
        registry
            .actuator(id.as_str())
            .map(|a| a.kind.as_str())
            .expect("ruleset integrity")
    };

    let mut out = Vec::new();
    let n = rs.rules().len();
    for i in 0..n {
        if analysis.facts[i].sensors.is_empty() {
            continue;
        }
        for j in i + 1..n {
            if analysis.facts[j].sensors.is_empty() {
                continue;
            }
            let (ri, rj) = (&rs.rules()[i], &rs.rules()[j]);
            let same_actuator = ri.action.actuator == rj.action.actuator;
            let different_controllers = ri.controller != rj.controller;
            let relation = cfg
                .action_relations
                .relation_between(
                    actuator_kind(i),
                    ri.action.action.as_str(),
                    actuator_kind(j),
                    rj.action.action.as_str(),
                )
                .expect("document validated action vocabularies");
            let opposite = relation == crate::model::Relation::Opposite;
            let related = analysis.features_related(i, j, &closure);
            if !same_actuator && !(related && (different_controllers || opposite)) {
                continue;
            }

            let simultaneous = analysis.simultaneous(i, j);
            let overlap_any = analysis.overlapping(i, j, false);
            let overlap_gap = overlap_any && analysis.overlapping(i, j, true);
            let repeated = relation == crate::model::Relation::Same;

            let mut emit = |kind, holds: bool| {
                if holds {
                    out.push(PotentialConflict::new(rs, kind, i, j));
                }
            };
            emit(C1, same_actuator && different_controllers && simultaneous);
            emit(C2, !same_actuator && different_controllers && related && simultaneous);
            emit(
                C3,
                same_actuator && if repeated { overlap_gap } else { overlap_any },
            );
            emit(C4, opposite && related && overlap_any);
            emit(C5, same_actuator && simultaneous);
            emit(C6, opposite && related && simultaneous);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_intersections() {
        let gt = |x| Interval::of(Comparator::Greater, x);
        let lt = |x| Interval::of(Comparator::Less, x);
        let eq = |x| Interval::of(Comparator::Equal, x);
        assert!(!lt(60.0).intersects(&gt(80.0)));
        assert!(gt(60.0).intersects(&lt(80.0)));
        assert!(!gt(60.0).intersects(&lt(60.0)));
        assert!(eq(60.0).intersects(&eq(60.0)));
        assert!(!eq(60.0).intersects(&gt(60.0)));
        assert!(eq(61.0).intersects(&gt(60.0)));
        assert!(gt(1.0).intersects(&gt(5.0)));
    }
}
