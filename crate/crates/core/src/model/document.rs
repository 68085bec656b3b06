//! The ruleset document: one TOML file with `registry`, `rules`,
//! `feature_deps`, `action_relations` and `detector` sections.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{
    DetectorConfig, SimilarityGroups, DEFAULT_DAY_LENGTH, DEFAULT_DUPLICATE_WINDOW,
    DEFAULT_OVERLAP_WINDOW, DEFAULT_SAME_TICK_EPSILON,
};
use super::graph::FeatureDependencyGraph;
use super::ids::{
    ActionName, ActuatorId, ActuatorKind, ControllerId, FeatureId, LocationId, RuleId, SensorKind,
};
use super::registry::{ActuatorDecl, FeatureDecl, Registry, RuleSet, SensorDecl, SensorKindDecl};
use super::relations::{ActionRelationTable, Relation};
use super::types::{ActionSpec, Comparator, Rule, Schedule, TriggerCondition};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    registry: RawRegistry,
    #[serde(default)]
    detector: RawDetector,
    #[serde(default)]
    feature_deps: RawFeatureDeps,
    #[serde(default)]
    action_relations: RawActionRelations,
    #[serde(default)]
    rules: Vec<RawRule>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegistry {
    locations: Vec<LocationId>,
    controllers: Vec<ControllerId>,
    #[serde(default)]
    sensor_kinds: Vec<SensorKindDecl>,
    #[serde(default)]
    sensors: Vec<RawSensor>,
    #[serde(default)]
    actuators: Vec<ActuatorDecl>,
    #[serde(default)]
    features: Vec<FeatureDecl>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensor {
    id: super::ids::SensorId,
    kind: SensorKind,
    location: LocationId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
    #[serde(default, skip_serializing_if = "is_zero")]
    tolerance: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    #[serde(default = "default_overlap")]
    overlap_window: u64,
    #[serde(default = "default_duplicate")]
    duplicate_window: u64,
    #[serde(default = "default_epsilon")]
    same_tick_epsilon: u64,
    #[serde(default = "default_day")]
    day_length: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    equivalent_kinds: Vec<Vec<SensorKind>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    equivalent_locations: Vec<Vec<LocationId>>,
}

fn default_overlap() -> u64 {
    DEFAULT_OVERLAP_WINDOW
}
fn default_duplicate() -> u64 {
    DEFAULT_DUPLICATE_WINDOW
}
fn default_epsilon() -> u64 {
    DEFAULT_SAME_TICK_EPSILON
}
fn default_day() -> u64 {
    DEFAULT_DAY_LENGTH
}

impl Default for RawDetector {
    fn default() -> Self {
        RawDetector {
            overlap_window: DEFAULT_OVERLAP_WINDOW,
            duplicate_window: DEFAULT_DUPLICATE_WINDOW,
            same_tick_epsilon: DEFAULT_SAME_TICK_EPSILON,
            day_length: DEFAULT_DAY_LENGTH,
            equivalent_kinds: Vec::new(),
            equivalent_locations: Vec::new(),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeatureDeps {
    #[serde(default)]
    edges: Vec<(FeatureId, FeatureId)>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActionRelations {
    #[serde(default)]
    kinds: BTreeMap<ActuatorKind, RawKindRelations>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cross: Vec<RawCrossRelation>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKindRelations {
    actions: Vec<ActionName>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    opposite: Vec<(ActionName, ActionName)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dependent: Vec<(ActionName, ActionName)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    different: Vec<(ActionName, ActionName)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCrossRelation {
    /// `kind:action`
    a: String,
    b: String,
    relation: Relation,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    id: RuleId,
    controller: ControllerId,
    trigger: RawTrigger,
    action: RawAction,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrigger {
    sensor_kind: SensorKind,
    comparator: Comparator,
    threshold: f64,
    unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    location: Option<LocationId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<Schedule>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    actuator: ActuatorId,
    action: ActionName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    location: Option<LocationId>,
    affected_features: Vec<FeatureId>,
}

/// A parsed ruleset together with the detector configuration it declares.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub ruleset: RuleSet,
    pub config: DetectorConfig,
}

impl Document {
    /// Validates everything that spans the ruleset and the configuration:
    /// action vocabularies, dependency-graph nodes, similarity groups and
    /// schedules.
    pub fn new(ruleset: RuleSet, config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        let registry = ruleset.registry();

        let declared: std::collections::BTreeSet<&FeatureId> =
            registry.features().iter().map(|f| &f.id).collect();
        let graph_nodes: std::collections::BTreeSet<&FeatureId> =
            config.dependency_graph.nodes().iter().collect();
        if declared != graph_nodes {
            return Err(Error::invalid(
                "feature dependency graph",
                "nodes must be exactly the declared features",
            ));
        }
        for group in &config.similarity.kinds {
            for kind in group {
                if registry.sensor_kind(kind.as_str()).is_none() {
                    return Err(Error::unknown("sensor kind", kind.as_str()));
                }
            }
        }
        for group in &config.similarity.locations {
            for loc in group {
                if !registry.has_location(loc.as_str()) {
                    return Err(Error::unknown("location", loc.as_str()));
                }
            }
        }
        for actuator in registry.actuators() {
            if !config.action_relations.has_kind(actuator.kind.as_str()) {
                return Err(Error::invalid(
                    format!("actuator `{}`", actuator.id),
                    format!("kind `{}` has no declared action vocabulary", actuator.kind),
                ));
            }
        }
        for rule in ruleset.rules() {
            let actuator = registry
                .actuator(rule.action.actuator.as_str())
                .expect("ruleset integrity checked");
            if !config
                .action_relations
                .has_action(actuator.kind.as_str(), rule.action.action.as_str())
            {
                return Err(Error::UnknownAction {
                    kind: actuator.kind.to_string(),
                    action: rule.action.action.to_string(),
                });
            }
            if let Some(schedule) = &rule.trigger.schedule {
                schedule.validate(config.day_length).map_err(|e| {
                    Error::invalid(format!("rule `{}`", rule.id), e.to_string())
                })?;
            }
        }
        Ok(Document { ruleset, config })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawDocument = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
        raw.into_document()
    }

    /// Builds a document from an already parsed TOML table, e.g. one
    /// assembled from several files.
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let raw: RawDocument = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Syntax {
                line: 0,
                column: 0,
                message: e.message().to_owned(),
            })?;
        raw.into_document()
    }

    /// Canonical TOML form. Parsing it yields an equal document.
    pub fn to_toml(&self) -> String {
        toml::to_string(&RawDocument::from_document(self)).expect("document is serializable")
    }
}

pub fn parse_document(text: &str) -> Result<Document> {
    Document::parse(text)
}

pub fn parse_ruleset(text: &str) -> Result<RuleSet> {
    Document::parse(text).map(|d| d.ruleset)
}

/// Parses TOML text into a table, reporting syntax errors with their position.
pub(crate) fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| syntax_error(text, &e))
}

fn syntax_error(text: &str, err: &toml::de::Error) -> Error {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::Syntax {
        line,
        column,
        message: err.message().to_owned(),
    }
}

fn parse_qualified(s: &str) -> Result<(ActuatorKind, ActionName)> {
    match s.split_once(':') {
        Some((kind, action)) if !kind.is_empty() && !action.is_empty() => {
            Ok((kind.into(), action.into()))
        }
        _ => Err(Error::invalid(
            "cross relation",
            format!("`{s}` is not of the form kind:action"),
        )),
    }
}

impl RawDocument {
    fn into_document(self) -> Result<Document> {
        let reg = self.registry;
        let kind_units: BTreeMap<&SensorKind, &str> = reg
            .sensor_kinds
            .iter()
            .map(|k| (&k.name, k.unit.as_str()))
            .collect();
        let mut sensors = Vec::with_capacity(reg.sensors.len());
        for s in reg.sensors {
            if let (Some(unit), Some(kind_unit)) = (&s.unit, kind_units.get(&s.kind)) {
                if unit != kind_unit {
                    return Err(Error::invalid(
                        format!("sensor `{}`", s.id),
                        format!("unit `{unit}` does not match kind `{}` unit `{kind_unit}`", s.kind),
                    ));
                }
            }
            sensors.push(SensorDecl {
                id: s.id,
                kind: s.kind,
                location: s.location,
                tolerance: s.tolerance,
            });
        }
        let registry = Registry::new(
            reg.locations,
            reg.controllers,
            reg.sensor_kinds,
            sensors,
            reg.actuators,
            reg.features,
        )?;

        let mut rules = Vec::with_capacity(self.rules.len());
        for raw in self.rules {
            let actuator = registry
                .actuator(raw.action.actuator.as_str())
                .ok_or_else(|| Error::unknown("actuator", raw.action.actuator.as_str()))?;
            let location = raw
                .action
                .location
                .unwrap_or_else(|| actuator.location.clone());
            rules.push(Rule {
                id: raw.id,
                controller: raw.controller,
                trigger: TriggerCondition {
                    sensor_kind: raw.trigger.sensor_kind,
                    comparator: raw.trigger.comparator,
                    threshold: raw.trigger.threshold,
                    unit: raw.trigger.unit,
                    location: raw.trigger.location,
                    schedule: raw.trigger.schedule,
                },
                action: ActionSpec {
                    actuator: raw.action.actuator,
                    action: raw.action.action,
                    location,
                    affected_features: raw.action.affected_features,
                },
            });
        }
        let ruleset = RuleSet::new(registry, rules)?;

        let graph = FeatureDependencyGraph::new(
            ruleset.registry().features().iter().map(|f| f.id.clone()),
            self.feature_deps.edges,
        )?;

        let mut relations = ActionRelationTable::new();
        for (kind, raw) in &self.action_relations.kinds {
            relations.declare_kind(kind.clone(), raw.actions.iter().cloned())?;
        }
        for (kind, raw) in self.action_relations.kinds {
            for (list, relation) in [
                (raw.opposite, Relation::Opposite),
                (raw.dependent, Relation::Dependent),
                (raw.different, Relation::Different),
            ] {
                for (a, b) in list {
                    relations.relate(kind.as_str(), a, b, relation)?;
                }
            }
        }
        for cross in self.action_relations.cross {
            relations.relate_across(
                parse_qualified(&cross.a)?,
                parse_qualified(&cross.b)?,
                cross.relation,
            )?;
        }

        let config = DetectorConfig {
            overlap_window: self.detector.overlap_window,
            duplicate_window: self.detector.duplicate_window,
            same_tick_epsilon: self.detector.same_tick_epsilon,
            day_length: self.detector.day_length,
            similarity: SimilarityGroups {
                kinds: self
                    .detector
                    .equivalent_kinds
                    .into_iter()
                    .map(|g| g.into_iter().collect())
                    .collect(),
                locations: self
                    .detector
                    .equivalent_locations
                    .into_iter()
                    .map(|g| g.into_iter().collect())
                    .collect(),
            },
            dependency_graph: graph,
            action_relations: relations,
        };
        Document::new(ruleset, config)
    }

    fn from_document(doc: &Document) -> Self {
        let registry = doc.ruleset.registry();
        let kind_units: BTreeMap<&SensorKind, &str> = registry
            .sensor_kinds()
            .iter()
            .map(|k| (&k.name, k.unit.as_str()))
            .collect();
        let cfg = &doc.config;

        let mut kinds = BTreeMap::new();
        for (kind, actions) in cfg.action_relations.kinds() {
            let mut raw = RawKindRelations {
                actions: actions.to_vec(),
                opposite: Vec::new(),
                dependent: Vec::new(),
                different: Vec::new(),
            };
            for (a, b, relation) in cfg.action_relations.declared_pairs(kind.as_str()) {
                let pair = (a.clone(), b.clone());
                match relation {
                    Relation::Opposite => raw.opposite.push(pair),
                    Relation::Dependent => raw.dependent.push(pair),
                    Relation::Different => raw.different.push(pair),
                    Relation::Same => unreachable!("same is never declared"),
                }
            }
            kinds.insert(kind.clone(), raw);
        }
        let cross = cfg
            .action_relations
            .cross_pairs()
            .map(|(a, b, relation)| RawCrossRelation {
                a: format!("{}:{}", a.0, a.1),
                b: format!("{}:{}", b.0, b.1),
                relation,
            })
            .collect();

        RawDocument {
            registry: RawRegistry {
                locations: registry.locations().to_vec(),
                controllers: registry.controllers().to_vec(),
                sensor_kinds: registry.sensor_kinds().to_vec(),
                sensors: registry
                    .sensors()
                    .iter()
                    .map(|s| RawSensor {
                        id: s.id.clone(),
                        kind: s.kind.clone(),
                        location: s.location.clone(),
                        unit: kind_units.get(&s.kind).map(|u| u.to_string()),
                        tolerance: s.tolerance,
                    })
                    .collect(),
                actuators: registry.actuators().to_vec(),
                features: registry.features().to_vec(),
            },
            detector: RawDetector {
                overlap_window: cfg.overlap_window,
                duplicate_window: cfg.duplicate_window,
                same_tick_epsilon: cfg.same_tick_epsilon,
                day_length: cfg.day_length,
                equivalent_kinds: cfg
                    .similarity
                    .kinds
                    .iter()
                    .map(|g| g.iter().cloned().collect())
                    .collect(),
                equivalent_locations: cfg
                    .similarity
                    .locations
                    .iter()
                    .map(|g| g.iter().cloned().collect())
                    .collect(),
            },
            feature_deps: RawFeatureDeps {
                edges: cfg.dependency_graph.edges().iter().cloned().collect(),
            },
            action_relations: RawActionRelations { kinds, cross },
            rules: doc
                .ruleset
                .rules()
                .iter()
                .map(|r| RawRule {
                    id: r.id.clone(),
                    controller: r.controller.clone(),
                    trigger: RawTrigger {
                        sensor_kind: r.trigger.sensor_kind.clone(),
                        comparator: r.trigger.comparator,
                        threshold: r.trigger.threshold,
                        unit: r.trigger.unit.clone(),
                        location: r.trigger.location.clone(),
                        schedule: r.trigger.schedule,
                    },
                    action: RawAction {
                        actuator: r.action.actuator.clone(),
                        action: r.action.action.clone(),
                        location: Some(r.action.location.clone()),
                        affected_features: r.action.affected_features.clone(),
                    },
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[registry]
locations = ["room1"]
controllers = ["hvac"]

[[registry.sensor_kinds]]
name = "temperature"
unit = "F"
min = 0.0
max = 120.0

[[registry.sensors]]
id = "t1"
kind = "temperature"
location = "room1"

[[registry.actuators]]
id = "thermo1"
kind = "thermostat"
location = "room1"

[[registry.features]]
id = "temp_room1"
kind = "temperature"
location = "room1"

[action_relations.kinds.thermostat]
actions = ["increase", "decrease"]
opposite = [["increase", "decrease"]]

[[rules]]
id = "heat"
controller = "hvac"
trigger = { sensor_kind = "temperature", comparator = "<", threshold = 65.0, unit = "F" }
action = { actuator = "thermo1", action = "increase", affected_features = ["temp_room1"] }
"#;

    #[test]
    fn minimal_document() {
        let doc = Document::parse(MINIMAL).unwrap();
        assert_eq!(doc.ruleset.rules().len(), 1);
        assert_eq!(doc.config.overlap_window, 5);
        assert_eq!(doc.config.duplicate_window, 30);
        assert_eq!(doc.ruleset.rules()[0].action.location.as_str(), "room1");
    }

    #[test]
    fn dangling_actuator_is_named() {
        let text = MINIMAL.replace("actuator = \"thermo1\", action", "actuator = \"thermo9\", action");
        let err = Document::parse(&text).unwrap_err();
        assert!(
            matches!(&err, Error::UnknownReference { id, .. } if id == "thermo9"),
            "{err}"
        );
        assert!(err.to_string().contains("thermo9"));
    }

    #[test]
    fn duplicate_rule_id() {
        let rule = &MINIMAL[MINIMAL.find("[[rules]]").unwrap()..];
        let text = format!("{MINIMAL}\n{rule}");
        assert!(matches!(
            Document::parse(&text),
            Err(Error::DuplicateId { kind: "rule", .. })
        ));
    }

    #[test]
    fn syntax_error_reports_position() {
        let text = MINIMAL.replace("threshold = 65.0", "threshold = = 65.0");
        match Document::parse(&text) {
            Err(Error::Syntax { line, .. }) => {
                let expected = text
                    .lines()
                    .position(|l| l.contains("= = 65.0"))
                    .unwrap()
                    + 1;
                assert_eq!(line, expected);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_action_rejected() {
        let text = MINIMAL.replace("action = \"increase\"", "action = \"explode\"");
        assert!(matches!(
            Document::parse(&text),
            Err(Error::UnknownAction { .. })
        ));
    }

    #[test]
    fn unit_mismatch_rejected() {
        let text = MINIMAL.replace("unit = \"F\" }", "unit = \"C\" }");
        assert!(matches!(Document::parse(&text), Err(Error::Invalid { .. })));
    }

    #[test]
    fn round_trip_is_a_fixed_point() {
        let doc = Document::parse(MINIMAL).unwrap();
        let text = doc.to_toml();
        let again = Document::parse(&text).unwrap();
        assert_eq!(doc, again);
        assert_eq!(text, again.to_toml());
    }
}
