//! Domain types, the ruleset document, and the relations every policy check
//! is built on.

mod config;
mod document;
mod graph;
mod ids;
mod registry;
mod relations;
mod types;

pub use config::{
    overlapping_events, DetectorConfig, SimilarityGroups, DEFAULT_DAY_LENGTH,
    DEFAULT_DUPLICATE_WINDOW, DEFAULT_OVERLAP_WINDOW, DEFAULT_SAME_TICK_EPSILON,
};
pub use document::{parse_document, parse_ruleset, Document};
pub(crate) use document::parse_table;
pub use graph::{dependent_features, DependencyClosure, FeatureDependencyGraph};
pub use ids::{
    ActionName, ActuatorId, ActuatorKind, ControllerId, EventId, FeatureId, LocationId, RuleId,
    SensorId, SensorKind, TimeStamp,
};
pub use registry::{ActuatorDecl, FeatureDecl, Registry, RuleSet, SensorDecl, SensorKindDecl};
pub use relations::{action_relation, ActionRelationTable, QualifiedAction, Relation};
pub use types::{
    ActionSpec, Comparator, Event, EventSignature, PredicateClass, Rule, Schedule,
    TriggerCondition,
};
