use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ids::{
    ActuatorId, ActuatorKind, ControllerId, FeatureId, LocationId, SensorId, SensorKind,
};
use super::types::Rule;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorKindDecl {
    pub name: SensorKind,
    pub unit: String,
    /// Declared measurement range, used to sample trigger space.
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDecl {
    pub id: SensorId,
    pub kind: SensorKind,
    pub location: LocationId,
    /// Two readings closer than this count as the same measurement.
    #[serde(default)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorDecl {
    pub id: ActuatorId,
    pub kind: ActuatorKind,
    pub location: LocationId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDecl {
    pub id: FeatureId,
    /// Physical quantity, e.g. `temperature`.
    pub kind: String,
    pub location: LocationId,
}

/// Declared devices, controllers, features and places. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Registry {
    locations: Vec<LocationId>,
    controllers: Vec<ControllerId>,
    sensor_kinds: Vec<SensorKindDecl>,
    sensors: Vec<SensorDecl>,
    actuators: Vec<ActuatorDecl>,
    features: Vec<FeatureDecl>,
    kind_index: HashMap<SensorKind, usize>,
    sensor_index: HashMap<SensorId, usize>,
    actuator_index: HashMap<ActuatorId, usize>,
    feature_index: HashMap<FeatureId, usize>,
}

fn index_unique<K: Clone + Eq + std::hash::Hash + ToString>(
    kind: &'static str,
    keys: impl Iterator<Item = K>,
) -> Result<HashMap<K, usize>> {
    let mut map = HashMap::new();
    for (i, key) in keys.enumerate() {
        if map.insert(key.clone(), i).is_some() {
            return Err(Error::duplicate(kind, key.to_string()));
        }
    }
    Ok(map)
}

impl Registry {
    pub fn new(
        locations: Vec<LocationId>,
        controllers: Vec<ControllerId>,
        sensor_kinds: Vec<SensorKindDecl>,
        sensors: Vec<SensorDecl>,
        actuators: Vec<ActuatorDecl>,
        features: Vec<FeatureDecl>,
    ) -> Result<Self> {
        let location_set = index_unique("location", locations.iter().cloned())?;
        index_unique("controller", controllers.iter().cloned())?;
        let kind_index = index_unique("sensor kind", sensor_kinds.iter().map(|k| k.name.clone()))?;
        let sensor_index = index_unique("sensor", sensors.iter().map(|s| s.id.clone()))?;
        let actuator_index = index_unique("actuator", actuators.iter().map(|a| a.id.clone()))?;
        let feature_index = index_unique("feature", features.iter().map(|f| f.id.clone()))?;

        let check_location = |loc: &LocationId| {
            if location_set.contains_key(loc) {
                Ok(())
            } else {
                Err(Error::unknown("location", loc.as_str()))
            }
        };
        // Negated comparisons also reject NaN.
        for kind in &sensor_kinds {
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(kind.min <= kind.max) {
                return Err(Error::invalid(
                    format!("sensor kind `{}`", kind.name),
                    "min must not exceed max",
                ));
            }
        }
        for sensor in &sensors {
            if !kind_index.contains_key(&sensor.kind) {
                return Err(Error::unknown("sensor kind", sensor.kind.as_str()));
            }
            check_location(&sensor.location)?;
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(sensor.tolerance >= 0.0) {
                return Err(Error::invalid(
                    format!("sensor `{}`", sensor.id),
                    "tolerance must be non-negative",
                ));
            }
        }
        for actuator in &actuators {
            check_location(&actuator.location)?;
        }
        for feature in &features {
            check_location(&feature.location)?;
        }

        Ok(Registry {
            locations,
            controllers,
            sensor_kinds,
            sensors,
            actuators,
            features,
            kind_index,
            sensor_index,
            actuator_index,
            feature_index,
        })
    }

    pub fn locations(&self) -> &[LocationId] {
        &self.locations
    }

    pub fn controllers(&self) -> &[ControllerId] {
        &self.controllers
    }

    pub fn sensor_kinds(&self) -> &[SensorKindDecl] {
        &self.sensor_kinds
    }

    pub fn sensors(&self) -> &[SensorDecl] {
        &self.sensors
    }

    pub fn actuators(&self) -> &[ActuatorDecl] {
        &self.actuators
    }

    pub fn features(&self) -> &[FeatureDecl] {
        &self.features
    }

    pub fn sensor_kind(&self, name: &str) -> Option<&SensorKindDecl> {
        self.kind_index.get(name).map(|&i| &self.sensor_kinds[i])
    }

    pub fn sensor(&self, id: &str) -> Option<&SensorDecl> {
        self.sensor_index.get(id).map(|&i| &self.sensors[i])
    }

    pub fn actuator(&self, id: &str) -> Option<&ActuatorDecl> {
        self.actuator_index.get(id).map(|&i| &self.actuators[i])
    }

    pub fn feature(&self, id: &str) -> Option<&FeatureDecl> {
        self.feature_index.get(id).map(|&i| &self.features[i])
    }

    pub fn has_location(&self, id: &str) -> bool {
        self.locations.iter().any(|l| l.as_str() == id)
    }

    pub fn has_controller(&self, id: &str) -> bool {
        self.controllers.iter().any(|c| c.as_str() == id)
    }
}

/// A validated set of rules together with the registry they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    registry: Registry,
    rules: Vec<Rule>,
}

impl RuleSet {
    /// Checks referential integrity of every rule against `registry`.
    pub fn new(registry: Registry, rules: Vec<Rule>) -> Result<Self> {
        let controllers: HashSet<&str> = registry.controllers.iter().map(|c| c.as_str()).collect();
        let mut ids = HashSet::new();
        for rule in &rules {
            if !ids.insert(rule.id.as_str()) {
                return Err(Error::duplicate("rule", rule.id.as_str()));
            }
            if !controllers.contains(rule.controller.as_str()) {
                return Err(Error::unknown("controller", rule.controller.as_str()));
            }

            let trigger = &rule.trigger;
            let kind = registry
                .sensor_kind(trigger.sensor_kind.as_str())
                .ok_or_else(|| Error::unknown("sensor kind", trigger.sensor_kind.as_str()))?;
            if kind.unit != trigger.unit {
                return Err(Error::invalid(
                    format!("rule `{}`", rule.id),
                    format!(
                        "threshold unit `{}` does not match `{}` unit `{}`",
                        trigger.unit, kind.name, kind.unit
                    ),
                ));
            }
            if !trigger.threshold.is_finite() {
                return Err(Error::invalid(
                    format!("rule `{}`", rule.id),
                    "threshold must be finite",
                ));
            }
            if let Some(loc) = &trigger.location {
                if !registry.has_location(loc.as_str()) {
                    return Err(Error::unknown("location", loc.as_str()));
                }
            }

            let action = &rule.action;
            let actuator = registry
                .actuator(action.actuator.as_str())
                .ok_or_else(|| Error::unknown("actuator", action.actuator.as_str()))?;
            if actuator.location != action.location {
                return Err(Error::invalid(
                    format!("rule `{}`", rule.id),
                    format!(
                        "action location `{}` differs from actuator `{}` location `{}`",
                        action.location, actuator.id, actuator.location
                    ),
                ));
            }
            if action.affected_features.is_empty() {
                return Err(Error::invalid(
                    format!("rule `{}`", rule.id),
                    "an action must affect at least one feature",
                ));
            }
            let mut seen = HashSet::new();
            for feature in &action.affected_features {
                if registry.feature(feature.as_str()).is_none() {
                    return Err(Error::unknown("feature", feature.as_str()));
                }
                if !seen.insert(feature.as_str()) {
                    return Err(Error::duplicate("affected feature", feature.as_str()));
                }
            }
        }
        Ok(RuleSet { registry, rules })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule_index(&self, id: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.id.as_str() == id)
    }
}
