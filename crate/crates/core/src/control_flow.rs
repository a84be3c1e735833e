//! Heuristics-net mining over a DFG snapshot and decision-point discovery.
//!
//! Split activities are read directly off the dependency graph: any node
//! with two or more outgoing dependency edges is a decision point whose
//! classes are its direct successors. This treats every split as an
//! exclusive choice.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dfg::DfgEdge;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeuristicsNet {
    nodes: BTreeSet<String>,
    edges: BTreeMap<(String, String), f64>,
    structural_hash: String,
}

/// Dependency measure of the heuristics miner. Self loops use
/// `|a>a| / (|a>a| + 1)`.
pub fn dependency(ab: u64, ba: u64, self_loop: bool) -> f64 {
    if self_loop {
        ab as f64 / (ab as f64 + 1.0)
    } else {
        (ab as f64 - ba as f64) / (ab as f64 + ba as f64 + 1.0)
    }
}

impl HeuristicsNet {
    /// Keeps edge `(a,b)` iff its dependency reaches `dep_threshold`.
    pub fn mine(snapshot: &[DfgEdge], dep_threshold: f64) -> Self {
        let counts: HashMap<(&str, &str), u64> = snapshot
            .iter()
            .map(|e| ((e.from.as_str(), e.to.as_str()), e.count))
            .collect();
        let mut edges = BTreeMap::new();
        let mut nodes = BTreeSet::new();
        for e in snapshot {
            let back = counts
                .get(&(e.to.as_str(), e.from.as_str()))
                .copied()
                .unwrap_or(0);
            let dep = dependency(e.count, back, e.from == e.to);
            if e.count > 0 && dep >= dep_threshold {
                nodes.insert(e.from.clone());
                nodes.insert(e.to.clone());
                edges.insert((e.from.clone(), e.to.clone()), dep);
            }
        }
        let structural_hash = structural_hash(&nodes, &edges);
        Self {
            nodes,
            edges,
            structural_hash,
        }
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.edges
            .iter()
            .map(|((a, b), d)| (a.as_str(), b.as_str(), *d))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.contains_key(&(from.to_string(), to.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn structural_hash(&self) -> &str {
        &self.structural_hash
    }

    pub fn successors(&self, node: &str) -> BTreeSet<String> {
        self.edges
            .keys()
            .filter(|(a, _)| a == node)
            .map(|(_, b)| b.clone())
            .collect()
    }

    /// Nodes without outgoing edges.
    pub fn sinks(&self) -> BTreeSet<String> {
        let with_out: BTreeSet<&String> = self.edges.keys().map(|(a, _)| a).collect();
        self.nodes
            .iter()
            .filter(|n| !with_out.contains(n))
            .cloned()
            .collect()
    }

    pub fn decision_points(&self) -> BTreeMap<String, DecisionPoint> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (a, b) in self.edges.keys() {
            out.entry(a.clone()).or_default().insert(b.clone());
        }
        out.into_iter()
            .filter(|(_, succ)| succ.len() >= 2)
            .map(|(id, classes)| (id.clone(), DecisionPoint { id, classes }))
            .collect()
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph heuristics_net {\n");
        for n in &self.nodes {
            let _ = writeln!(s, "  \"{}\";", escape(n));
        }
        for ((a, b), d) in &self.edges {
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [label=\"{d:.3}\"];",
                escape(a),
                escape(b)
            );
        }
        s.push_str("}\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn structural_hash(nodes: &BTreeSet<String>, edges: &BTreeMap<(String, String), f64>) -> String {
    let mut h = Sha256::new();
    for n in nodes {
        h.update(n.as_bytes());
        h.update([0u8]);
    }
    h.update([1u8]);
    for (a, b) in edges.keys() {
        h.update(a.as_bytes());
        h.update([0u8]);
        h.update(b.as_bytes());
        h.update([0u8]);
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// A split in the control flow, identified by the activity preceding it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub id: String,
    pub classes: BTreeSet<String>,
}

impl DecisionPoint {
    pub fn new<I, S>(id: impl Into<String>, classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: id.into(),
            classes: classes.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassChange {
    pub point: DecisionPoint,
    pub old_classes: BTreeSet<String>,
    pub new_classes: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructuralChange {
    pub added_points: Vec<DecisionPoint>,
    pub removed_points: Vec<DecisionPoint>,
    pub class_changed_points: Vec<ClassChange>,
}

impl StructuralChange {
    pub fn is_empty(&self) -> bool {
        self.added_points.is_empty()
            && self.removed_points.is_empty()
            && self.class_changed_points.is_empty()
    }
}

/// Matches points by id.
pub fn diff(
    old: &BTreeMap<String, DecisionPoint>,
    new: &BTreeMap<String, DecisionPoint>,
) -> StructuralChange {
    let mut change = StructuralChange::default();
    for (id, p) in new {
        match old.get(id) {
            None => change.added_points.push(p.clone()),
            Some(o) if o.classes != p.classes => change.class_changed_points.push(ClassChange {
                point: p.clone(),
                old_classes: o.classes.clone(),
                new_classes: p.classes.clone(),
            }),
            Some(_) => {}
        }
    }
    for (id, p) in old {
        if !new.contains_key(id) {
            change.removed_points.push(p.clone());
        }
    }
    change
}
