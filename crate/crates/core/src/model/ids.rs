use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// A room, corridor or other place devices live in.
    LocationId
);
string_id!(SensorId);
string_id!(
    /// Enumerated sensor label such as `temperature`, `smoke` or `motion`.
    SensorKind
);
string_id!(ActuatorId);
string_id!(
    /// Actuator family (`thermostat`, `alarm`, ...); action vocabularies are declared per kind.
    ActuatorKind
);
string_id!(ControllerId);
string_id!(
    /// An environmental feature at one location, e.g. `temp_room1`.
    FeatureId
);
string_id!(RuleId);
string_id!(ActionName);

/// Discrete time in ticks. One tick is one second of simulated wall time.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimeStamp(pub u64);

impl TimeStamp {
    pub fn abs_diff(self, other: TimeStamp) -> u64 {
        self.0.abs_diff(other.0)
    }

    pub fn time_of_day(self, day_length: u64) -> u64 {
        self.0 % day_length
    }
}

impl fmt::Display for TimeStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of an event, unique within one stream.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EventId(pub u64);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
