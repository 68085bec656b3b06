use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ids::{
    ActionName, ActuatorId, ControllerId, EventId, FeatureId, LocationId, RuleId, SensorId,
    SensorKind, TimeStamp,
};
use crate::error::{Error, Result};

/// Which side of a reference value a measurement landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PredicateClass {
    #[serde(rename = "gt")]
    GreaterThan,
    #[serde(rename = "lt")]
    LessThan,
    #[serde(rename = "eq")]
    EqualTo,
}

impl PredicateClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PredicateClass::GreaterThan => "gt",
            PredicateClass::LessThan => "lt",
            PredicateClass::EqualTo => "eq",
        }
    }
}

impl fmt::Display for PredicateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredicateClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(PredicateClass::GreaterThan),
            "lt" => Ok(PredicateClass::LessThan),
            "eq" => Ok(PredicateClass::EqualTo),
            other => Err(Error::invalid(
                "predicate class",
                format!("`{other}` is not one of gt, lt, eq"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventSignature {
    pub sensor_kind: SensorKind,
    pub predicate: PredicateClass,
    pub location: LocationId,
}

/// A timestamped sensor reading. `value` is expressed in the unit declared
/// for the sensor's kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub sensor: SensorId,
    pub time: TimeStamp,
    pub value: f64,
    pub signature: EventSignature,
}

impl Event {
    pub fn new(
        id: u64,
        sensor: impl Into<SensorId>,
        time: u64,
        value: f64,
        kind: impl Into<SensorKind>,
        predicate: PredicateClass,
        location: impl Into<LocationId>,
    ) -> Self {
        Event {
            id: EventId(id),
            sensor: sensor.into(),
            time: TimeStamp(time),
            value,
            signature: EventSignature {
                sensor_kind: kind.into(),
                predicate,
                location: location.into(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = "<")]
    Less,
    #[serde(rename = "==")]
    Equal,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Greater => value > threshold,
            Comparator::Less => value < threshold,
            Comparator::Equal => value == threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Greater => ">",
            Comparator::Less => "<",
            Comparator::Equal => "==",
        }
    }
}

/// Daily activity window in ticks-of-day. `start > end` wraps past midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub start: u64,
    pub end: u64,
}

impl Schedule {
    pub fn is_active(&self, time_of_day: u64) -> bool {
        if self.start < self.end {
            (self.start..self.end).contains(&time_of_day)
        } else {
            time_of_day >= self.start || time_of_day < self.end
        }
    }

    pub fn validate(&self, day_length: u64) -> Result<()> {
        if self.start >= day_length || self.end > day_length {
            return Err(Error::invalid(
                "schedule",
                format!(
                    "window {}..{} exceeds day length {day_length}",
                    self.start, self.end
                ),
            ));
        }
        if self.start == self.end || (self.start == 0 && self.end == day_length) {
            return Err(Error::invalid(
                "schedule",
                format!("window {}..{} is empty or covers the whole day", self.start, self.end),
            ));
        }
        Ok(())
    }

    /// Half-open, non-wrapping pieces of the window within `[0, day_length)`.
    pub fn intervals(&self, day_length: u64) -> Vec<(u64, u64)> {
        if self.start < self.end {
            vec![(self.start, self.end)]
        } else {
            let mut pieces = vec![(self.start, day_length)];
            if self.end > 0 {
                pieces.push((0, self.end));
            }
            pieces
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerCondition {
    pub sensor_kind: SensorKind,
    pub comparator: Comparator,
    pub threshold: f64,
    pub unit: String,
    pub location: Option<LocationId>,
    pub schedule: Option<Schedule>,
}

impl TriggerCondition {
    pub fn matches(&self, event: &Event, day_length: u64) -> bool {
        self.sensor_kind == event.signature.sensor_kind
            && self.comparator.holds(event.value, self.threshold)
            && self
                .location
                .as_ref()
                .is_none_or(|loc| *loc == event.signature.location)
            && self.is_scheduled(event.time, day_length)
    }

    pub fn is_scheduled(&self, time: TimeStamp, day_length: u64) -> bool {
        self.schedule
            .is_none_or(|s| s.is_active(time.time_of_day(day_length)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub actuator: ActuatorId,
    pub action: ActionName,
    pub location: LocationId,
    pub affected_features: Vec<FeatureId>,
}

/// One controller-owned trigger-condition to actuation mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: RuleId,
    pub controller: ControllerId,
    pub trigger: TriggerCondition,
    pub action: ActionSpec,
}
