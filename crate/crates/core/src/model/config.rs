use std::collections::BTreeSet;

use super::graph::FeatureDependencyGraph;
use super::ids::{LocationId, SensorKind};
use super::relations::ActionRelationTable;
use super::types::{Event, EventSignature};
use crate::error::{Error, Result};

pub const DEFAULT_OVERLAP_WINDOW: u64 = 5;
pub const DEFAULT_DUPLICATE_WINDOW: u64 = 30;
pub const DEFAULT_SAME_TICK_EPSILON: u64 = 0;
/// 86,400 seconds scaled down 100x.
pub const DEFAULT_DAY_LENGTH: u64 = 864;

/// Optional equivalence classes that widen event similarity beyond equality
/// of sensor kind and location.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityGroups {
    pub kinds: Vec<BTreeSet<SensorKind>>,
    pub locations: Vec<BTreeSet<LocationId>>,
}

impl SimilarityGroups {
    /// Groups must be disjoint so that similarity stays an equivalence.
    pub fn validate(&self) -> Result<()> {
        fn disjoint<T: Ord + std::fmt::Display>(what: &str, groups: &[BTreeSet<T>]) -> Result<()> {
            let mut seen = BTreeSet::new();
            for member in groups.iter().flatten() {
                if !seen.insert(member) {
                    return Err(Error::invalid(
                        format!("equivalent {what}"),
                        format!("`{member}` appears in more than one group"),
                    ));
                }
            }
            Ok(())
        }
        disjoint("kinds", &self.kinds)?;
        disjoint("locations", &self.locations)
    }

    pub fn kinds_similar(&self, a: &SensorKind, b: &SensorKind) -> bool {
        a == b || self.kinds.iter().any(|g| g.contains(a) && g.contains(b))
    }

    pub fn locations_similar(&self, a: &LocationId, b: &LocationId) -> bool {
        a == b || self.locations.iter().any(|g| g.contains(a) && g.contains(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// W: events with similar signatures at most this many ticks apart overlap.
    pub overlap_window: u64,
    /// D: repeated identical readings from one sensor within this many ticks are duplicates.
    pub duplicate_window: u64,
    /// Two ticks at most this far apart count as "the same time".
    pub same_tick_epsilon: u64,
    pub day_length: u64,
    pub similarity: SimilarityGroups,
    pub dependency_graph: FeatureDependencyGraph,
    pub action_relations: ActionRelationTable,
}

impl DetectorConfig {
    pub fn new(dependency_graph: FeatureDependencyGraph, action_relations: ActionRelationTable) -> Self {
        DetectorConfig {
            overlap_window: DEFAULT_OVERLAP_WINDOW,
            duplicate_window: DEFAULT_DUPLICATE_WINDOW,
            same_tick_epsilon: DEFAULT_SAME_TICK_EPSILON,
            day_length: DEFAULT_DAY_LENGTH,
            similarity: SimilarityGroups::default(),
            dependency_graph,
            action_relations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.overlap_window < 1 {
            return Err(Error::invalid("detector", "overlap_window must be at least 1"));
        }
        if self.duplicate_window < 1 {
            return Err(Error::invalid("detector", "duplicate_window must be at least 1"));
        }
        if self.day_length < 1 {
            return Err(Error::invalid("detector", "day_length must be at least 1"));
        }
        self.similarity.validate()
    }

    /// No check looks further back than this many ticks.
    pub fn horizon(&self) -> u64 {
        self.overlap_window
            .max(self.duplicate_window)
            .max(self.same_tick_epsilon)
    }

    pub fn signatures_similar(&self, a: &EventSignature, b: &EventSignature) -> bool {
        a.predicate == b.predicate
            && self.similarity.kinds_similar(&a.sensor_kind, &b.sensor_kind)
            && self.similarity.locations_similar(&a.location, &b.location)
    }
}

/// Two distinct events with similar signatures no more than W ticks apart.
/// Every other pair, including an event with itself, is disjoint.
pub fn overlapping_events(e1: &Event, e2: &Event, cfg: &DetectorConfig) -> bool {
    e1.id != e2.id
        && cfg.signatures_similar(&e1.signature, &e2.signature)
        && e1.time.abs_diff(e2.time) <= cfg.overlap_window
}
