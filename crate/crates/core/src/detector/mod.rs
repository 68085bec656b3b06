//! Online and static evaluation of the seven conflict policies.
//!
//! | tag | pair condition |
//! |-----|----------------|
//! | C1  | same actuator, different controllers, same time |
//! | C2  | different actuators, different controllers, same time, equal or dependent features |
//! | C3  | overlapping events, same actuator, non-identical actions or the same action repeated at a later tick |
//! | C4  | overlapping events, opposite actions, equal or dependent features |
//! | C5  | disjoint events, same time, same actuator |
//! | C6  | disjoint events, same time, opposite actions, equal or dependent features |
//! | C7  | one sensor repeats the same reading within the duplicate window |

mod engine;
mod static_check;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{
    ActionSpec, ControllerId, DetectorConfig, Event, EventId, RuleId, RuleSet, TimeStamp,
};

pub use engine::{AccumulationLists, DetectionWindow, Detector, TickOutcome};
pub use static_check::{static_check, PotentialConflict};

/// An action a rule issued in response to one event.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggeredAction {
    pub event: Event,
    pub rule: RuleId,
    /// Position of the rule in its ruleset; breaks ties in canonical ordering.
    pub rule_index: usize,
    pub controller: ControllerId,
    pub action: ActionSpec,
    pub time: TimeStamp,
}

impl TriggeredAction {
    fn order_key(&self) -> (EventId, usize) {
        (self.event.id, self.rule_index)
    }
}

/// Every rule the event fires, in declaration order.
pub fn match_rules(e: &Event, rs: &RuleSet, cfg: &DetectorConfig) -> Result<Vec<TriggeredAction>> {
    if rs
        .registry()
        .sensor_kind(e.signature.sensor_kind.as_str())
        .is_none()
    {
        return Err(Error::UnknownSensorKind(e.signature.sensor_kind.to_string()));
    }
    Ok(rs
        .rules()
        .iter()
        .enumerate()
        .filter(|(_, rule)| rule.trigger.matches(e, cfg.day_length))
        .map(|(rule_index, rule)| TriggeredAction {
            event: e.clone(),
            rule: rule.id.clone(),
            rule_index,
            controller: rule.controller.clone(),
            action: rule.action.clone(),
            time: e.time,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConflictKind {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
}

impl ConflictKind {
    pub const ALL: [ConflictKind; 7] = [
        ConflictKind::C1,
        ConflictKind::C2,
        ConflictKind::C3,
        ConflictKind::C4,
        ConflictKind::C5,
        ConflictKind::C6,
        ConflictKind::C7,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        ["C1", "C2", "C3", "C4", "C5", "C6", "C7"][self.index()]
    }
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConflictKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConflictKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("conflict kind", format!("`{s}` is not C1..C7")))
    }
}

/// A subset of conflict kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KindMask(u8);

impl KindMask {
    pub const ALL: KindMask = KindMask(0x7f);
    pub const NONE: KindMask = KindMask(0);

    pub fn only(kind: ConflictKind) -> Self {
        KindMask(1 << kind.index())
    }

    pub fn with(self, kind: ConflictKind) -> Self {
        KindMask(self.0 | 1 << kind.index())
    }

    pub fn contains(self, kind: ConflictKind) -> bool {
        self.0 & (1 << kind.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Participants {
    /// C1..C6: two triggered actions in canonical (event id, rule position) order.
    Actions(Box<[TriggeredAction; 2]>),
    /// C7: the earlier event, then the later (suppressible) one.
    Events(Box<[Event; 2]>),
}

/// Identity of one participant: its event and, for actions, the rule position.
pub type ParticipantKey = (EventId, Option<usize>);

/// Sort and comparison key of a conflict; independent of the note text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConflictKey {
    pub tick: TimeStamp,
    pub kind: ConflictKind,
    pub first: ParticipantKey,
    pub second: ParticipantKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub participants: Participants,
    /// Tick at which the later participant appeared.
    pub tick: TimeStamp,
    pub note: String,
}

impl Conflict {
    /// Builds a C1..C6 conflict, putting the pair in canonical order.
    pub fn between_actions(kind: ConflictKind, a: TriggeredAction, b: TriggeredAction) -> Self {
        debug_assert!(kind != ConflictKind::C7);
        let (a, b) = if a.order_key() <= b.order_key() { (a, b) } else { (b, a) };
        let tick = a.time.max(b.time);
        let note = action_note(kind, &a, &b);
        Conflict {
            kind,
            participants: Participants::Actions(Box::new([a, b])),
            tick,
            note,
        }
    }

    /// Builds a C7 conflict; the later event is the one to suppress.
    pub fn duplicate_events(a: Event, b: Event) -> Self {
        let (a, b) = if (a.time, a.id) <= (b.time, b.id) { (a, b) } else { (b, a) };
        let note = format!(
            "sensor {} repeated {} {} after {} ticks; event {} is suppressible",
            b.sensor,
            b.signature.sensor_kind,
            b.value,
            b.time.0 - a.time.0,
            b.id
        );
        Conflict {
            kind: ConflictKind::C7,
            tick: b.time,
            participants: Participants::Events(Box::new([a, b])),
            note,
        }
    }

    pub fn key(&self) -> ConflictKey {
        let (first, second) = match &self.participants {
            Participants::Actions(p) => (
                (p[0].event.id, Some(p[0].rule_index)),
                (p[1].event.id, Some(p[1].rule_index)),
            ),
            Participants::Events(p) => ((p[0].id, None), (p[1].id, None)),
        };
        ConflictKey {
            tick: self.tick,
            kind: self.kind,
            first,
            second,
        }
    }

    pub fn actions(&self) -> Option<&[TriggeredAction; 2]> {
        match &self.participants {
            Participants::Actions(p) => Some(p),
            Participants::Events(_) => None,
        }
    }

    pub fn events(&self) -> [&Event; 2] {
        match &self.participants {
            Participants::Actions(p) => [&p[0].event, &p[1].event],
            Participants::Events(p) => [&p[0], &p[1]],
        }
    }

    /// For C7, the later duplicate event.
    pub fn suppressible(&self) -> Option<&Event> {
        match &self.participants {
            Participants::Events(p) => Some(&p[1]),
            Participants::Actions(_) => None,
        }
    }
}

/// Sorts conflicts into their canonical report order.
pub fn sort_conflicts(conflicts: &mut [Conflict]) {
    conflicts.sort_by_key(Conflict::key);
}

fn action_note(kind: ConflictKind, a: &TriggeredAction, b: &TriggeredAction) -> String {
    let (x, y) = (&a.action, &b.action);
    match kind {
        ConflictKind::C1 => format!(
            "controllers {} and {} both command {} ({} / {})",
            a.controller, b.controller, x.actuator, x.action, y.action
        ),
        ConflictKind::C2 => format!(
            "controllers {} and {} drive {} and {} on related features",
            a.controller, b.controller, x.actuator, y.actuator
        ),
        ConflictKind::C3 => format!(
            "overlapping events command {} to {} and {}",
            x.actuator, x.action, y.action
        ),
        ConflictKind::C4 => format!(
            "overlapping events issue opposite actions {}.{} and {}.{} on related features",
            x.actuator, x.action, y.actuator, y.action
        ),
        ConflictKind::C5 => format!(
            "disjoint events command {} to {} and {} at the same time",
            x.actuator, x.action, y.action
        ),
        ConflictKind::C6 => format!(
            "disjoint events issue opposite actions {}.{} and {}.{} on related features",
            x.actuator, x.action, y.actuator, y.action
        ),
        ConflictKind::C7 => unreachable!("C7 pairs events, not actions"),
    }
}

/// Per-kind totals, indexed by [`ConflictKind::index`].
pub fn count_by_kind(conflicts: &[Conflict]) -> [usize; 7] {
    let mut counts = [0; 7];
    for c in conflicts {
        counts[c.kind.index()] += 1;
    }
    counts
}
