//! Directed "affects" relation between environmental features.
//!
//! An edge `a -> b` means changes in `a` affect `b`. Two distinct features are
//! *dependent* when either one reaches the other, directly or through
//! intermediate features. Conflicts are order-independent, so the relation is
//! used in its symmetric form.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::ids::FeatureId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureDependencyGraph {
    nodes: BTreeSet<FeatureId>,
    edges: BTreeSet<(FeatureId, FeatureId)>,
    successors: BTreeMap<FeatureId, Vec<FeatureId>>,
}

impl FeatureDependencyGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = FeatureId>,
        edges: impl IntoIterator<Item = (FeatureId, FeatureId)>,
    ) -> Result<Self> {
        let nodes: BTreeSet<FeatureId> = nodes.into_iter().collect();
        let mut edge_set = BTreeSet::new();
        let mut successors: BTreeMap<FeatureId, Vec<FeatureId>> = BTreeMap::new();
        for (from, to) in edges {
            for end in [&from, &to] {
                if !nodes.contains(end) {
                    return Err(Error::UnknownFeature(end.to_string()));
                }
            }
            if from == to {
                return Err(Error::invalid(
                    "feature dependency",
                    format!("self-loop on `{from}`"),
                ));
            }
            edge_set.insert((from, to));
        }
        for (from, to) in &edge_set {
            successors.entry(from.clone()).or_default().push(to.clone());
        }
        Ok(FeatureDependencyGraph {
            nodes,
            edges: edge_set,
            successors,
        })
    }

    pub fn nodes(&self) -> &BTreeSet<FeatureId> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(FeatureId, FeatureId)> {
        &self.edges
    }

    fn require(&self, f: &FeatureId) -> Result<()> {
        if self.nodes.contains(f) {
            Ok(())
        } else {
            Err(Error::UnknownFeature(f.to_string()))
        }
    }

    /// Whether `to` is reachable from `from` along at least one edge.
    pub fn affects(&self, from: &FeatureId, to: &FeatureId) -> Result<bool> {
        self.require(from)?;
        self.require(to)?;
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([from]);
        while let Some(node) = queue.pop_front() {
            for next in self.successors.get(node).into_iter().flatten() {
                if next == to {
                    return Ok(true);
                }
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        Ok(false)
    }

    /// Symmetric, irreflexive dependency between two declared features.
    pub fn dependent(&self, f1: &FeatureId, f2: &FeatureId) -> Result<bool> {
        self.require(f1)?;
        self.require(f2)?;
        if f1 == f2 {
            return Ok(false);
        }
        Ok(self.affects(f1, f2)? || self.affects(f2, f1)?)
    }

    pub fn closure(&self) -> DependencyClosure {
        DependencyClosure::build(self)
    }
}

pub fn dependent_features(
    f1: &FeatureId,
    f2: &FeatureId,
    graph: &FeatureDependencyGraph,
) -> Result<bool> {
    graph.dependent(f1, f2)
}

/// Dense precomputed form of [`FeatureDependencyGraph::dependent`], plus weakly
/// connected components for candidate bucketing.
#[derive(Debug, Clone)]
pub struct DependencyClosure {
    index: HashMap<FeatureId, usize>,
    words: usize,
    bits: Vec<u64>,
    component: Vec<usize>,
}

impl DependencyClosure {
    fn build(graph: &FeatureDependencyGraph) -> Self {
        let index: HashMap<FeatureId, usize> = graph
            .nodes
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        let n = index.len();
        let words = n.div_ceil(64).max(1);
        let mut adj = vec![Vec::new(); n];
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (a, b) in &graph.edges {
            let (a, b) = (index[a], index[b]);
            adj[a].push(b);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }

        let mut bits = vec![0u64; n * words];
        let mut seen = vec![usize::MAX; n];
        let mut stack = Vec::new();
        for start in 0..n {
            stack.clear();
            stack.extend(adj[start].iter().copied());
            while let Some(node) = stack.pop() {
                if seen[node] == start {
                    continue;
                }
                seen[node] = start;
                if node != start {
                    bits[start * words + node / 64] |= 1 << (node % 64);
                    bits[node * words + start / 64] |= 1 << (start % 64);
                }
                stack.extend(adj[node].iter().copied());
            }
        }
        let component = (0..n).map(|i| find(&mut parent, i)).collect();
        DependencyClosure {
            index,
            words,
            bits,
            component,
        }
    }

    pub fn index_of(&self, f: &str) -> Option<usize> {
        self.index.get(f).copied()
    }

    pub fn dependent(&self, a: usize, b: usize) -> bool {
        a != b && self.bits[a * self.words + b / 64] & (1 << (b % 64)) != 0
    }

    /// Equal or dependent.
    pub fn related(&self, a: usize, b: usize) -> bool {
        a == b || self.dependent(a, b)
    }

    pub fn component(&self, a: usize) -> usize {
        self.component[a]
    }
}
