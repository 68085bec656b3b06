//! Scenario files: event sources, house parameters, optional paired baseline,
//! and the ruleset they run against, all in one TOML document.
//!
//! A scenario whose `[scenario]` table sets `base = "house"` is layered on top
//! of the bundled house (registry, relations and physical layout); any other
//! file must be self-contained.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::physics::{RoomParams, ThermostatMode};
use crate::error::{Error, Result};
use crate::model::{parse_table, ActuatorId, Document, LocationId, SensorId};

pub const HOUSE_BASE: &str = include_str!("../../fixtures/house.toml");

const BUILTIN: [(&str, &str); 8] = [
    ("S1", include_str!("../../fixtures/scenarios/s1.toml")),
    ("S2", include_str!("../../fixtures/scenarios/s2.toml")),
    ("S3", include_str!("../../fixtures/scenarios/s3.toml")),
    ("S4", include_str!("../../fixtures/scenarios/s4.toml")),
    ("S5", include_str!("../../fixtures/scenarios/s5.toml")),
    ("S6", include_str!("../../fixtures/scenarios/s6.toml")),
    ("S7", include_str!("../../fixtures/scenarios/s7.toml")),
    ("S8", include_str!("../../fixtures/scenarios/s8.toml")),
];

/// Which detected conflicts block actuations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Enforcement {
    /// Detect and count only.
    #[default]
    None,
    /// Drop the actions of the later event of every C7 pair.
    Duplicates,
    /// Also drop one action of every C1..C6 pair completed this tick.
    All,
}

/// A stochastic or deterministic producer of sensor events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SourceSpec {
    /// Fires with `probability` each tick, reporting `value`.
    Bernoulli {
        name: String,
        sensor: SensorId,
        probability: f64,
        #[serde(default = "one")]
        value: f64,
    },
    /// Like `bernoulli`, and marks the sensor's room occupied for `hold` ticks.
    Motion {
        name: String,
        sensor: SensorId,
        probability: f64,
        #[serde(default = "one_tick")]
        hold: u64,
    },
    /// Reports the room's temperature, humidity or luminance whenever it has
    /// moved at least `deadband` from the last report.
    Measured {
        sensor: SensorId,
        #[serde(default)]
        deadband: f64,
        #[serde(default = "tenth")]
        resolution: f64,
    },
    /// Reports the tick of day every `period` ticks.
    Clock {
        sensor: SensorId,
        #[serde(default = "one_tick")]
        period: u64,
    },
    /// With `probability` each tick, re-sends the sensor's last report.
    Retransmit {
        name: String,
        sensor: SensorId,
        probability: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn one_tick() -> u64 {
    1
}
fn tenth() -> f64 {
    0.1
}

impl SourceSpec {
    pub fn name(&self) -> &str {
        match self {
            SourceSpec::Bernoulli { name, .. }
            | SourceSpec::Motion { name, .. }
            | SourceSpec::Retransmit { name, .. } => name,
            SourceSpec::Measured { sensor, .. } | SourceSpec::Clock { sensor, .. } => {
                sensor.as_str()
            }
        }
    }

    pub fn sensor(&self) -> &SensorId {
        match self {
            SourceSpec::Bernoulli { sensor, .. }
            | SourceSpec::Motion { sensor, .. }
            | SourceSpec::Measured { sensor, .. }
            | SourceSpec::Clock { sensor, .. }
            | SourceSpec::Retransmit { sensor, .. } => sensor,
        }
    }

    pub fn probability(&self) -> Option<f64> {
        match self {
            SourceSpec::Bernoulli { probability, .. }
            | SourceSpec::Motion { probability, .. }
            | SourceSpec::Retransmit { probability, .. } => Some(*probability),
            _ => None,
        }
    }

    fn probability_mut(&mut self) -> Option<&mut f64> {
        match self {
            SourceSpec::Bernoulli { probability, .. }
            | SourceSpec::Motion { probability, .. }
            | SourceSpec::Retransmit { probability, .. } => Some(probability),
            _ => None,
        }
    }
}

/// Per-room overrides of [`RoomParams`] and initial conditions.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    pub k_loss: Option<f64>,
    pub g_heat: Option<f64>,
    pub k_win: Option<f64>,
    pub k_h: Option<f64>,
    pub g_hum: Option<f64>,
    pub l_base: Option<f64>,
    pub l_window: Option<f64>,
    pub l_lamp: Option<f64>,
    pub occupancy_heat: Option<f64>,
    /// Defaults to the outdoor temperature at tick 0.
    pub initial_temperature: Option<f64>,
    /// Defaults to 45 %RH.
    pub initial_humidity: Option<f64>,
    #[serde(default)]
    pub always_occupied: bool,
}

impl RoomConfig {
    pub fn apply(&self, base: RoomParams) -> RoomParams {
        RoomParams {
            k_loss: self.k_loss.unwrap_or(base.k_loss),
            g_heat: self.g_heat.unwrap_or(base.g_heat),
            k_win: self.k_win.unwrap_or(base.k_win),
            k_h: self.k_h.unwrap_or(base.k_h),
            g_hum: self.g_hum.unwrap_or(base.g_hum),
            l_base: self.l_base.unwrap_or(base.l_base),
            l_window: self.l_window.unwrap_or(base.l_window),
            l_lamp: self.l_lamp.unwrap_or(base.l_lamp),
            occupancy_heat: self.occupancy_heat.unwrap_or(base.occupancy_heat),
        }
    }
}

/// Actuator behaviour beyond its kind's defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    /// Ticks an activating command lasts before the device reverts; 0 latches.
    #[serde(default)]
    pub hold: u64,
    /// For lights: when not commanded this tick, the light is on exactly
    /// when this blind is closed.
    pub follows: Option<ActuatorId>,
    /// Initial state: `on`/`off`, `open`/`closed`, or a thermostat mode.
    pub initial: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseConfig {
    #[serde(default = "default_k_adj")]
    pub k_adj: f64,
    #[serde(default = "default_outdoor")]
    pub outdoor_mean: f64,
    #[serde(default)]
    pub outdoor_swing: f64,
    #[serde(default = "default_daylight")]
    pub daylight: f64,
    #[serde(default)]
    pub adjacency: Vec<(LocationId, LocationId)>,
    #[serde(default)]
    pub defaults: RoomParams,
    #[serde(default)]
    pub rooms: BTreeMap<LocationId, RoomConfig>,
    #[serde(default)]
    pub devices: BTreeMap<ActuatorId, DeviceConfig>,
}

fn default_k_adj() -> f64 {
    0.1
}
fn default_outdoor() -> f64 {
    65.0
}
fn default_daylight() -> f64 {
    300.0
}

/// How a paired baseline run differs from the main run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pairing {
    pub disable_sources: Vec<String>,
    /// Overlay merged into the `[house]` table for the baseline.
    pub house: toml::Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub description: String,
    pub horizon: u64,
    pub seed: u64,
    pub enforcement: Enforcement,
    /// Room whose temperature and humidity deviations a paired run reports.
    pub focus: Option<LocationId>,
    pub sources: Vec<SourceSpec>,
    pub house: toml::Table,
    pub pairing: Option<Pairing>,
    pub document: Document,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    id: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    base: Option<String>,
    horizon: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    enforcement: Enforcement,
    #[serde(default)]
    focus: Option<LocationId>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPairing {
    #[serde(default)]
    disable_sources: Vec<String>,
    #[serde(default)]
    house: toml::Table,
}

/// Recursively overlays `overlay` onto `base`; tables merge, anything else
/// replaces.
pub fn merge_tables(base: &mut toml::Table, overlay: &toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

fn from_value<T: serde::de::DeserializeOwned>(what: &str, value: toml::Value) -> Result<T> {
    value
        .try_into()
        .map_err(|e: toml::de::Error| Error::invalid(what, e.message().to_owned()))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = parse_table(text)?;
        let header_value = table
            .remove("scenario")
            .ok_or_else(|| Error::invalid("scenario file", "missing [scenario] table"))?;
        let header: RawHeader = from_value("[scenario]", header_value)?;
        if let Some(base) = &header.base {
            if base != "house" {
                return Err(Error::invalid(
                    "[scenario]",
                    format!("unknown base `{base}`; the only bundled base is `house`"),
                ));
            }
            let mut merged = parse_table(HOUSE_BASE)?;
            merge_tables(&mut merged, &table);
            table = merged;
        }

        let house = match table.remove("house") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(Error::invalid("[house]", "must be a table")),
            None => toml::Table::new(),
        };
        let sources: Vec<SourceSpec> = match table.remove("sources") {
            Some(v) => from_value("[[sources]]", v)?,
            None => Vec::new(),
        };
        let pairing = match table.remove("pairing") {
            Some(v) => {
                let raw: RawPairing = from_value("[pairing]", v)?;
                Some(Pairing {
                    disable_sources: raw.disable_sources,
                    house: raw.house,
                })
            }
            None => None,
        };
        let document = Document::from_table(table)?;

        let scenario = Scenario {
            id: header.id,
            description: header.description,
            horizon: header.horizon,
            seed: header.seed,
            enforcement: header.enforcement,
            focus: header.focus,
            sources,
            house,
            pairing,
            document,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::invalid(
                format!("scenario {}", self.id),
                "horizon must be at least 1",
            ));
        }
        let registry = self.document.ruleset.registry();
        let mut names = std::collections::BTreeSet::new();
        for source in &self.sources {
            if !names.insert(source.name()) {
                return Err(Error::duplicate("source", source.name()));
            }
            let sensor = registry
                .sensor(source.sensor().as_str())
                .ok_or_else(|| Error::unknown("sensor", source.sensor().as_str()))?;
            if let Some(p) = source.probability() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(
                        format!("source `{}`", source.name()),
                        "probability must lie in [0, 1]",
                    ));
                }
            }
            if let SourceSpec::Measured { resolution, deadband, .. } = source {
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                if !(*resolution > 0.0) || !(*deadband >= 0.0) {
                    return Err(Error::invalid(
                        format!("source `{}`", source.name()),
                        "resolution must be positive and deadband non-negative",
                    ));
                }
                if !matches!(
                    sensor.kind.as_str(),
                    "temperature" | "humidity" | "luminance"
                ) {
                    return Err(Error::invalid(
                        format!("source `{}`", source.name()),
                        format!("cannot measure sensor kind `{}`", sensor.kind),
                    ));
                }
            }
            if let SourceSpec::Clock { period, .. } = source {
                if *period == 0 {
                    return Err(Error::invalid(
                        format!("source `{}`", source.name()),
                        "period must be at least 1",
                    ));
                }
            }
        }
        if let Some(focus) = &self.focus {
            if !registry.has_location(focus.as_str()) {
                return Err(Error::unknown("location", focus.as_str()));
            }
        }
        if let Some(pairing) = &self.pairing {
            for name in &pairing.disable_sources {
                if !names.contains(name.as_str()) {
                    return Err(Error::unknown("source", name.as_str()));
                }
            }
            self.baseline().expect("pairing present").house_config()?;
        }
        self.house_config()?;
        Ok(())
    }

    pub fn house_config(&self) -> Result<HouseConfig> {
        from_value("[house]", toml::Value::Table(self.house.clone()))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Scenario {
            seed,
            ..self.clone()
        }
    }

    pub fn with_horizon(&self, horizon: u64) -> Self {
        Scenario {
            horizon,
            ..self.clone()
        }
    }

    pub fn with_enforcement(&self, enforcement: Enforcement) -> Self {
        Scenario {
            enforcement,
            ..self.clone()
        }
    }

    pub fn source(&self, name: &str) -> Option<&SourceSpec> {
        self.sources.iter().find(|s| s.name() == name)
    }

    /// Sets the firing probability of a stochastic source.
    pub fn set_probability(&mut self, name: &str, probability: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::invalid(
                format!("source `{name}`"),
                "probability must lie in [0, 1]",
            ));
        }
        let slot = self
            .sources
            .iter_mut()
            .find(|s| s.name() == name)
            .and_then(SourceSpec::probability_mut)
            .ok_or_else(|| Error::unknown("stochastic source", name))?;
        *slot = probability;
        Ok(())
    }

    /// The paired baseline: same seed and parameters with the pairing's
    /// sources removed and its house overrides applied.
    pub fn baseline(&self) -> Option<Scenario> {
        let pairing = self.pairing.as_ref()?;
        let mut house = self.house.clone();
        merge_tables(&mut house, &pairing.house);
        Some(Scenario {
            id: format!("{}-baseline", self.id),
            sources: self
                .sources
                .iter()
                .filter(|s| !pairing.disable_sources.iter().any(|n| n == s.name()))
                .cloned()
                .collect(),
            house,
            pairing: None,
            ..self.clone()
        })
    }
}

/// The eight bundled scenarios, S1..S8.
pub fn builtin_scenarios() -> Vec<Scenario> {
    BUILTIN
        .iter()
        .map(|(id, text)| {
            Scenario::parse(text).unwrap_or_else(|e| panic!("bundled scenario {id} is invalid: {e}"))
        })
        .collect()
}

pub fn builtin_scenario(id: &str) -> Result<Scenario> {
    BUILTIN
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(id))
        .map(|(_, text)| Scenario::parse(text))
        .unwrap_or_else(|| Err(Error::UnknownScenario(id.to_owned())))
}

pub(crate) fn parse_thermostat(s: &str) -> Option<ThermostatMode> {
    match s {
        "off" => Some(ThermostatMode::Off),
        "heat" | "on" => Some(ThermostatMode::Heat),
        "cool" => Some(ThermostatMode::Cool),
        _ => None,
    }
}
