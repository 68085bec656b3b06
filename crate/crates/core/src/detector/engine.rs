//! Sliding-window detector.
//!
//! Every tick the window is extended with the new events and the actions they
//! trigger, the accumulation lists are rebuilt from the in-window entries, and
//! each new action or event is paired with every in-window partner that could
//! conflict with it. Pairs are never skipped once one conflict is found, so
//! the output for a tick is the full set of violations completed at that tick.

use std::collections::{HashMap, VecDeque};

use super::{Conflict, ConflictKind, KindMask, TriggeredAction};
use crate::error::{Error, Result};
use crate::model::{
    DependencyClosure, DetectorConfig, Event, LocationId, PredicateClass, Relation, Rule, RuleSet,
    SensorId, SensorKind, TimeStamp,
};

#[derive(Debug, Clone)]
struct CompiledRule {
    actuator: u32,
    controller: u32,
    action: u32,
    features: Box<[u32]>,
    components: Box<[u32]>,
}

/// Rules that could fire for events of one sensor kind.
#[derive(Debug, Clone, Default)]
struct TriggerBucket {
    anywhere: Vec<usize>,
    by_location: HashMap<LocationId, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SignatureClass {
    kind: u32,
    predicate: PredicateClass,
    location: u32,
}

#[derive(Debug, Clone)]
struct ActionEntry {
    ta: TriggeredAction,
    rule: u32,
    signature: SignatureClass,
}

#[derive(Debug, Clone)]
struct EventEntry {
    event: Event,
    sensor: u32,
}

#[derive(Debug, Clone)]
struct Slot {
    tick: u64,
    actions: Vec<ActionEntry>,
    events: Vec<EventEntry>,
}

/// Position of an entry: slot index from the front, then index within the slot.
type EntryRef = (u32, u32);

/// The three lists rebuilt for every evaluation: in-window actions, the
/// controllers that issued them, and in-window events.
#[derive(Debug, Clone, Default)]
pub struct AccumulationLists {
    actions: Vec<EntryRef>,
    controllers: Vec<u32>,
    events: Vec<EntryRef>,
    /// Entries at or after these positions were added by the current stage.
    first_new_action: usize,
    first_new_event: usize,
}

impl AccumulationLists {
    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn controller_count(&self) -> usize {
        self.controllers.len()
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }
}

/// Recent triggered actions and raw events, one slot per tick.
#[derive(Debug, Clone, Default)]
pub struct DetectionWindow {
    slots: VecDeque<Slot>,
    lists: AccumulationLists,
    /// Entries of the back slot from these indices on are staged, not committed.
    staged: Option<(usize, usize)>,
    last_tick: Option<u64>,
}

impl DetectionWindow {
    pub fn lists(&self) -> &AccumulationLists {
        &self.lists
    }

    pub fn oldest_tick(&self) -> Option<TimeStamp> {
        self.slots.front().map(|s| TimeStamp(s.tick))
    }

    pub fn last_tick(&self) -> Option<TimeStamp> {
        self.last_tick.map(TimeStamp)
    }

    pub fn action_count(&self) -> usize {
        self.slots.iter().map(|s| s.actions.len()).sum()
    }

    pub fn event_count(&self) -> usize {
        self.slots.iter().map(|s| s.events.len()).sum()
    }

    fn action(&self, (slot, idx): EntryRef) -> &ActionEntry {
        &self.slots[slot as usize].actions[idx as usize]
    }

    fn event(&self, (slot, idx): EntryRef) -> &EventEntry {
        &self.slots[slot as usize].events[idx as usize]
    }
}

/// What one tick produced.
#[derive(Debug, Clone, Default)]
pub struct TickOutcome {
    pub conflicts: Vec<Conflict>,
    /// Actions triggered by this tick's events, in event then rule order.
    pub actions: Vec<TriggeredAction>,
}

/// Online evaluator for one event stream.
#[derive(Debug, Clone)]
pub struct Detector {
    rules: Vec<Rule>,
    compiled: Vec<CompiledRule>,
    triggers: HashMap<SensorKind, TriggerBucket>,
    kind_class: HashMap<SensorKind, u32>,
    location_class: HashMap<LocationId, u32>,
    next_location_class: u32,
    sensors: HashMap<SensorId, u32>,
    tolerance: Vec<f64>,
    relations: Vec<Relation>,
    action_count: usize,
    closure: DependencyClosure,
    overlap_window: u64,
    duplicate_window: u64,
    epsilon: u64,
    day_length: u64,
    horizon: u64,
    window: DetectionWindow,
}

fn intern<K: Clone + Eq + std::hash::Hash>(map: &mut HashMap<K, u32>, key: &K) -> u32 {
    if let Some(&id) = map.get(key) {
        return id;
    }
    let id = map.len() as u32;
    map.insert(key.clone(), id);
    id
}

impl Detector {
    pub fn new(rs: &RuleSet, cfg: &DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        let registry = rs.registry();

        let mut kind_class = HashMap::new();
        for (class, group) in cfg.similarity.kinds.iter().enumerate() {
            for kind in group {
                kind_class.insert(kind.clone(), class as u32);
            }
        }
        let mut next = cfg.similarity.kinds.len() as u32;
        for decl in registry.sensor_kinds() {
            kind_class.entry(decl.name.clone()).or_insert_with(|| {
                next += 1;
                next - 1
            });
        }

        let mut location_class = HashMap::new();
        for (class, group) in cfg.similarity.locations.iter().enumerate() {
            for loc in group {
                location_class.insert(loc.clone(), class as u32);
            }
        }
        let mut next = cfg.similarity.locations.len() as u32;
        for loc in registry.locations() {
            location_class.entry(loc.clone()).or_insert_with(|| {
                next += 1;
                next - 1
            });
        }

        let mut sensors = HashMap::new();
        let mut tolerance = Vec::new();
        for decl in registry.sensors() {
            intern(&mut sensors, &decl.id);
            tolerance.push(decl.tolerance);
        }

        let table = &cfg.action_relations;
        let mut qualified = HashMap::new();
        let mut names = Vec::new();
        for (kind, actions) in table.kinds() {
            for action in actions {
                qualified.insert((kind.clone(), action.clone()), names.len() as u32);
                names.push((kind, action));
            }
        }
        let action_count = names.len();
        let mut relations = Vec::with_capacity(action_count * action_count);
        for (k1, n1) in &names {
            for (k2, n2) in &names {
                relations.push(table.relation_between(k1.as_str(), n1.as_str(), k2.as_str(), n2.as_str())?);
            }
        }

        let closure = cfg.dependency_graph.closure();
        let mut actuators = HashMap::new();
        let mut controllers = HashMap::new();
        let mut compiled = Vec::with_capacity(rs.rules().len());
        let mut triggers: HashMap<SensorKind, TriggerBucket> = HashMap::new();
        for (i, rule) in rs.rules().iter().enumerate() {
            let actuator = registry
                .actuator(rule.action.actuator.as_str())
                .ok_or_else(|| Error::unknown("actuator", rule.action.actuator.as_str()))?;
            let action = *qualified
                .get(&(actuator.kind.clone(), rule.action.action.clone()))
                .ok_or_else(|| Error::UnknownAction {
                    kind: actuator.kind.to_string(),
                    action: rule.action.action.to_string(),
                })?;
            let features = rule
                .action
                .affected_features
                .iter()
                .map(|f| {
                    closure
                        .index_of(f.as_str())
                        .map(|x| x as u32)
                        .ok_or_else(|| Error::UnknownFeature(f.to_string()))
                })
                .collect::<Result<Box<[u32]>>>()?;
            let mut components: Vec<u32> = features
                .iter()
                .map(|&f| closure.component(f as usize) as u32)
                .collect();
            components.sort_unstable();
            components.dedup();
            compiled.push(CompiledRule {
                actuator: intern(&mut actuators, &rule.action.actuator),
                controller: intern(&mut controllers, &rule.controller),
                action,
                features,
                components: components.into(),
            });

            let bucket = triggers.entry(rule.trigger.sensor_kind.clone()).or_default();
            match &rule.trigger.location {
                Some(loc) => bucket.by_location.entry(loc.clone()).or_default().push(i),
                None => bucket.anywhere.push(i),
            }
        }

        Ok(Detector {
            rules: rs.rules().to_vec(),
            compiled,
            triggers,
            kind_class,
            next_location_class: next,
            location_class,
            sensors,
            tolerance,
            relations,
            action_count,
            closure,
            overlap_window: cfg.overlap_window,
            duplicate_window: cfg.duplicate_window,
            epsilon: cfg.same_tick_epsilon,
            day_length: cfg.day_length,
            horizon: cfg.horizon(),
            window: DetectionWindow::default(),
        })
    }

    pub fn window(&self) -> &DetectionWindow {
        &self.window
    }

    /// Feeds one tick and returns every conflict it completes.
    pub fn detect_at_tick(&mut self, tick: TimeStamp, events: &[Event]) -> Result<Vec<Conflict>> {
        Ok(self.process_tick(tick, events)?.conflicts)
    }

    /// Like [`Detector::detect_at_tick`], also returning the triggered actions.
    pub fn process_tick(&mut self, tick: TimeStamp, events: &[Event]) -> Result<TickOutcome> {
        self.stage(tick, events)?;
        let conflicts = self.evaluate(KindMask::ALL);
        let actions = self.commit();
        Ok(TickOutcome { conflicts, actions })
    }

    /// Matches the events, adds them and their actions to the window and
    /// rebuilds the accumulation lists. Checks then see the staged entries as
    /// new until [`Detector::commit`]. Staging commits any previous stage.
    pub fn stage(&mut self, tick: TimeStamp, events: &[Event]) -> Result<()> {
        let t = tick.0;
        if let Some(last) = self.window.last_tick {
            if t < last {
                return Err(Error::OutOfOrder { last, got: t });
            }
        }
        for e in events {
            if e.time != tick {
                return Err(Error::EventTimeMismatch {
                    event: e.id.0,
                    time: e.time.0,
                    tick: t,
                });
            }
            if !self.kind_class.contains_key(&e.signature.sensor_kind) {
                return Err(Error::UnknownSensorKind(e.signature.sensor_kind.to_string()));
            }
        }
        self.commit();
        self.window.last_tick = Some(t);

        if self.window.slots.back().is_none_or(|s| s.tick != t) {
            self.window.slots.push_back(Slot {
                tick: t,
                actions: Vec::new(),
                events: Vec::new(),
            });
        }
        let (first_action, first_event) = {
            let back = self.window.slots.back().expect("slot pushed above");
            (back.actions.len(), back.events.len())
        };

        let mut new_actions = Vec::new();
        let mut new_events = Vec::with_capacity(events.len());
        let mut matched = Vec::new();
        for e in events {
            let signature = self.signature_class(e);
            self.matching_rules(e, &mut matched);
            for &rule in &matched {
                let r = &self.rules[rule];
                new_actions.push(ActionEntry {
                    ta: TriggeredAction {
                        event: e.clone(),
                        rule: r.id.clone(),
                        rule_index: rule,
                        controller: r.controller.clone(),
                        action: r.action.clone(),
                        time: e.time,
                    },
                    rule: rule as u32,
                    signature,
                });
            }
            let sensor = intern(&mut self.sensors, &e.sensor);
            new_events.push(EventEntry {
                event: e.clone(),
                sensor,
            });
        }
        let back = self.window.slots.back_mut().expect("slot pushed above");
        back.actions.append(&mut new_actions);
        back.events.append(&mut new_events);
        self.window.staged = Some((first_action, first_event));
        self.rebuild_lists(t);
        Ok(())
    }

    /// Marks staged entries as settled, evicts expired slots and returns the
    /// actions staged since the last commit.
    pub fn commit(&mut self) -> Vec<TriggeredAction> {
        let Some((first_action, _)) = self.window.staged.take() else {
            return Vec::new();
        };
        let actions = self
            .window
            .slots
            .back()
            .map(|s| s.actions[first_action..].iter().map(|a| a.ta.clone()).collect())
            .unwrap_or_default();
        if let Some(now) = self.window.last_tick {
            while self
                .window
                .slots
                .front()
                .is_some_and(|s| s.tick + self.horizon < now)
            {
                self.window.slots.pop_front();
            }
        }
        self.window.lists = AccumulationLists::default();
        actions
    }

    pub fn check_c1(&self) -> Vec<Conflict> {
        self.evaluate(KindMask::only(ConflictKind::C1))
    }

    pub fn check_c2(&self) -> Vec<Conflict> {
        self.evaluate(KindMask::only(ConflictKind::C2))
    }

    pub fn check_c3(&self) -> Vec<Conflict> {
        self.evaluate(KindMask::only(ConflictKind::C3))
    }

    pub fn check_c4(&self) -> Vec<Conflict> {
        self.evaluate(KindMask::only(ConflictKind::C4))
    }

    pub fn check_c5(&self) -> Vec<Conflict> {
        self.evaluate(KindMask::only(ConflictKind::C5))
    }

    pub fn check_c6(&self) -> Vec<Conflict> {
        self.evaluate(KindMask::only(ConflictKind::C6))
    }

    pub fn check_c7(&self) -> Vec<Conflict> {
        self.evaluate(KindMask::only(ConflictKind::C7))
    }

    fn signature_class(&mut self, e: &Event) -> SignatureClass {
        let location = match self.location_class.get(&e.signature.location) {
            Some(&class) => class,
            None => {
                let class = self.next_location_class;
                self.next_location_class += 1;
                self.location_class.insert(e.signature.location.clone(), class);
                class
            }
        };
        SignatureClass {
            kind: self.kind_class[&e.signature.sensor_kind],
            predicate: e.signature.predicate,
            location,
        }
    }

    /// Indices of the rules `e` fires, in declaration order.
    fn matching_rules(&self, e: &Event, out: &mut Vec<usize>) {
        out.clear();
        let Some(bucket) = self.triggers.get(&e.signature.sensor_kind) else {
            return;
        };
        out.extend_from_slice(&bucket.anywhere);
        if let Some(local) = bucket.by_location.get(&e.signature.location) {
            out.extend_from_slice(local);
            out.sort_unstable();
        }
        out.retain(|&i| {
            let trigger = &self.rules[i].trigger;
            trigger.comparator.holds(e.value, trigger.threshold)
                && trigger.is_scheduled(e.time, self.day_length)
        });
    }

    fn rebuild_lists(&mut self, now: u64) {
        let action_lookback = self.overlap_window.max(self.epsilon);
        let (first_action, first_event) = self.window.staged.unwrap_or((usize::MAX, usize::MAX));
        let last_slot = self.window.slots.len().saturating_sub(1);
        let mut lists = AccumulationLists::default();
        let mut controllers = Vec::new();
        for (s, slot) in self.window.slots.iter().enumerate() {
            let age = now - slot.tick;
            if age <= action_lookback {
                for (i, a) in slot.actions.iter().enumerate() {
                    if s == last_slot && i == first_action {
                        lists.first_new_action = lists.actions.len();
                    }
                    lists.actions.push((s as u32, i as u32));
                    controllers.push(self.compiled[a.rule as usize].controller);
                }
            }
            if age <= self.duplicate_window {
                for i in 0..slot.events.len() {
                    if s == last_slot && i == first_event {
                        lists.first_new_event = lists.events.len();
                    }
                    lists.events.push((s as u32, i as u32));
                }
            }
        }
        let back = &self.window.slots[last_slot];
        if first_action >= back.actions.len() {
            lists.first_new_action = lists.actions.len();
        }
        if first_event >= back.events.len() {
            lists.first_new_event = lists.events.len();
        }
        controllers.sort_unstable();
        controllers.dedup();
        lists.controllers = controllers;
        self.window.lists = lists;
    }

    /// Runs the checks in `mask` over the staged evaluation.
    pub fn evaluate(&self, mask: KindMask) -> Vec<Conflict> {
        let mut out = Vec::new();
        if self.window.staged.is_none() {
            return out;
        }
        let action_mask = KindMask::ALL_ACTION_KINDS.intersect(mask);
        if !action_mask.is_empty() {
            self.evaluate_actions(action_mask, &mut out);
        }
        if mask.contains(ConflictKind::C7) {
            self.evaluate_duplicates(&mut out);
        }
        super::sort_conflicts(&mut out);
        out
    }

    fn evaluate_actions(&self, mut mask: KindMask, out: &mut Vec<Conflict>) {
        let lists = &self.window.lists;
        if lists.first_new_action == lists.actions.len() {
            return;
        }
        if lists.controllers.len() < 2 {
            mask = mask
                .without(ConflictKind::C1)
                .without(ConflictKind::C2);
        }
        if mask.is_empty() {
            return;
        }

        let mut by_actuator: HashMap<u32, Vec<u32>> = HashMap::new();
        let mut by_component: HashMap<u32, Vec<u32>> = HashMap::new();
        for (li, &entry) in lists.actions.iter().enumerate() {
            let rule = &self.compiled[self.window.action(entry).rule as usize];
            by_actuator.entry(rule.actuator).or_default().push(li as u32);
            for &c in rule.components.iter() {
                by_component.entry(c).or_default().push(li as u32);
            }
        }

        let mut stamp = vec![u32::MAX; lists.actions.len()];
        for x in lists.first_new_action..lists.actions.len() {
            let ex = self.window.action(lists.actions[x]);
            let rx = &self.compiled[ex.rule as usize];
            let candidates = std::iter::once(&by_actuator[&rx.actuator])
                .chain(rx.components.iter().map(|c| &by_component[c]));
            for bucket in candidates {
                for &y in bucket {
                    let y = y as usize;
                    if stamp[y] == x as u32 || y == x {
                        continue;
                    }
                    stamp[y] = x as u32;
                    if y >= lists.first_new_action && y < x {
                        continue;
                    }
                    let ey = self.window.action(lists.actions[y]);
                    let kinds = self.pair_kinds(ex, ey, mask);
                    for kind in ConflictKind::ALL {
                        if kinds.contains(kind) {
                            out.push(Conflict::between_actions(
                                kind,
                                ex.ta.clone(),
                                ey.ta.clone(),
                            ));
                        }
                    }
                }
            }
        }
    }

    fn features_related(&self, a: &CompiledRule, b: &CompiledRule) -> bool {
        a.features.iter().any(|&f| {
            b.features
                .iter()
                .any(|&g| self.closure.related(f as usize, g as usize))
        })
    }

    fn pair_kinds(&self, x: &ActionEntry, y: &ActionEntry, mask: KindMask) -> KindMask {
        use ConflictKind::*;
        let (rx, ry) = (&self.compiled[x.rule as usize], &self.compiled[y.rule as usize]);
        let dt = x.ta.time.abs_diff(y.ta.time);
        let simultaneous = dt <= self.epsilon;
        let overlapping = x.ta.event.id != y.ta.event.id
            && x.signature == y.signature
            && dt <= self.overlap_window;
        let same_actuator = rx.actuator == ry.actuator;
        let different_controllers = rx.controller != ry.controller;
        let relation =
            self.relations[rx.action as usize * self.action_count + ry.action as usize];
        let opposite = relation == Relation::Opposite;
        let mut related = None;
        let mut related = || *related.get_or_insert_with(|| self.features_related(rx, ry));

        let mut found = KindMask::NONE;
        let mut flag = |kind: ConflictKind, holds: &mut dyn FnMut() -> bool| {
            if mask.contains(kind) && holds() {
                found = found.with(kind);
            }
        };
        flag(C1, &mut || same_actuator && different_controllers && simultaneous);
        flag(C2, &mut || {
            !same_actuator && different_controllers && simultaneous && related()
        });
        flag(C3, &mut || {
            overlapping && same_actuator && (relation != Relation::Same || dt > 0)
        });
        flag(C4, &mut || overlapping && opposite && related());
        flag(C5, &mut || !overlapping && simultaneous && same_actuator);
        flag(C6, &mut || {
            !overlapping && simultaneous && opposite && related()
        });
        found
    }

    fn evaluate_duplicates(&self, out: &mut Vec<Conflict>) {
        let lists = &self.window.lists;
        if lists.first_new_event == lists.events.len() {
            return;
        }
        let now = self.window.last_tick.expect("staged");
        let mut earlier: HashMap<u32, Vec<u32>> = HashMap::new();
        for (li, &entry) in lists.events[..lists.first_new_event].iter().enumerate() {
            let e = self.window.event(entry);
            if e.event.time.0 < now {
                earlier.entry(e.sensor).or_default().push(li as u32);
            }
        }
        for &entry in &lists.events[lists.first_new_event..] {
            let new = self.window.event(entry);
            let Some(candidates) = earlier.get(&new.sensor) else {
                continue;
            };
            let tolerance = self.tolerance.get(new.sensor as usize).copied().unwrap_or(0.0);
            for &li in candidates {
                let old = self.window.event(lists.events[li as usize]);
                if old.event.signature == new.event.signature
                    && (old.event.value - new.event.value).abs() <= tolerance
                {
                    out.push(Conflict::duplicate_events(
                        old.event.clone(),
                        new.event.clone(),
                    ));
                }
            }
        }
    }
}

impl KindMask {
    const ALL_ACTION_KINDS: KindMask = KindMask(0x3f);

    fn intersect(self, other: KindMask) -> KindMask {
        KindMask(self.0 & other.0)
    }

    fn without(self, kind: ConflictKind) -> KindMask {
        KindMask(self.0 & !(1 << kind.index()))
    }
}
