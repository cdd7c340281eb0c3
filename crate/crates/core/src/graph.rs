//! Skill graphs: directed acyclic graphs of categorized skills.
//!
//! Edges point from a depending skill to the skill it depends on, so the
//! single `Main` node is the unique source and sensors/actuators are leaves.
//! A [`SkillGraph`] can be built incrementally with [`SkillGraph::add_skill`]
//! and [`SkillGraph::add_dependency`], or loaded from its JSON document form.
//! Loaded documents are not trusted: run [`SkillGraph::validate`] before use.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The seven skill categories used to color and constrain a skill graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillCategory {
    Main,
    ObservableExternalBehavior,
    Perception,
    Planning,
    Action,
    Sensor,
    Actuator,
}

impl SkillCategory {
    pub const ALL: [SkillCategory; 7] = [
        SkillCategory::Main,
        SkillCategory::ObservableExternalBehavior,
        SkillCategory::Perception,
        SkillCategory::Planning,
        SkillCategory::Action,
        SkillCategory::Sensor,
        SkillCategory::Actuator,
    ];

    /// Graphviz fill color for the category.
    pub fn fill_color(self) -> &'static str {
        match self {
            SkillCategory::Main => "grey",
            SkillCategory::ObservableExternalBehavior => "yellow",
            SkillCategory::Perception => "green",
            SkillCategory::Planning => "lightblue",
            SkillCategory::Action => "orange",
            SkillCategory::Sensor => "blue",
            SkillCategory::Actuator => "red",
        }
    }

    /// Sensors and actuators terminate the dependency chain.
    pub fn is_leaf_category(self) -> bool {
        matches!(self, SkillCategory::Sensor | SkillCategory::Actuator)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillNode {
    pub id: String,
    pub name: String,
    pub category: SkillCategory,
    #[serde(default)]
    pub description: String,
}

impl SkillNode {
    pub fn new(id: impl Into<String>, name: impl Into<String>, category: SkillCategory) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            category,
            description: String::new(),
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

/// A dependency `from -> to`: `from` needs `to` to perform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillEdge {
    pub from: String,
    pub to: String,
    /// Requirement ids annotated on this edge.
    #[serde(default)]
    pub requirements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillGraph {
    pub maneuver: String,
    pub nodes: Vec<SkillNode>,
    pub edges: Vec<SkillEdge>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("skill id must not be empty")]
    EmptyId,
    #[error("duplicate skill id `{0}`")]
    DuplicateId(String),
    #[error("unknown skill `{0}`")]
    UnknownNode(String),
    #[error("dependency {from} -> {to} already exists")]
    DuplicateEdge { from: String, to: String },
    #[error("dependency {from} -> {to} would introduce a cycle")]
    CycleIntroduced { from: String, to: String },
    #[error("graph is invalid: {}", join_violations(.0))]
    InvalidGraph(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// A broken structural rule, naming the offending nodes and edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    EmptyId {
        index: usize,
    },
    DuplicateNodeId {
        id: String,
    },
    SelfLoop {
        node: String,
    },
    DanglingEdge {
        from: String,
        to: String,
        missing: String,
    },
    DuplicateEdge {
        from: String,
        to: String,
    },
    Cycle {
        nodes: Vec<String>,
    },
    NoMainNode,
    MultipleMainNodes {
        ids: Vec<String>,
    },
    MainHasIncoming {
        main: String,
        from: Vec<String>,
    },
    SensorNotLeaf {
        node: String,
        to: Vec<String>,
    },
    ActuatorNotLeaf {
        node: String,
        to: Vec<String>,
    },
    Unreachable {
        node: String,
    },
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::EmptyId { .. } => "empty_id",
            Violation::DuplicateNodeId { .. } => "duplicate_node_id",
            Violation::SelfLoop { .. } => "self_loop",
            Violation::DanglingEdge { .. } => "dangling_edge",
            Violation::DuplicateEdge { .. } => "duplicate_edge",
            Violation::Cycle { .. } => "cycle",
            Violation::NoMainNode => "no_main_node",
            Violation::MultipleMainNodes { .. } => "multiple_main_nodes",
            Violation::MainHasIncoming { .. } => "main_has_incoming",
            Violation::SensorNotLeaf { .. } => "sensor_not_leaf",
            Violation::ActuatorNotLeaf { .. } => "actuator_not_leaf",
            Violation::Unreachable { .. } => "unreachable",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId { index } => write!(f, "node #{index} has an empty id"),
            Violation::DuplicateNodeId { id } => write!(f, "node id `{id}` is used more than once"),
            Violation::SelfLoop { node } => write!(f, "edge {node} -> {node} is a self-loop"),
            Violation::DanglingEdge { from, to, missing } => {
                write!(f, "edge {from} -> {to} references unknown node `{missing}`")
            }
            Violation::DuplicateEdge { from, to } => {
                write!(f, "edge {from} -> {to} appears more than once")
            }
            Violation::Cycle { nodes } => {
                write!(f, "directed cycle through [{}]", nodes.join(", "))
            }
            Violation::NoMainNode => write!(f, "graph has no main node"),
            Violation::MultipleMainNodes { ids } => {
                write!(f, "graph has several main nodes [{}]", ids.join(", "))
            }
            Violation::MainHasIncoming { main, from } => {
                write!(
                    f,
                    "main node `{main}` has incoming edges from [{}]",
                    from.join(", ")
                )
            }
            Violation::SensorNotLeaf { node, to } => {
                write!(
                    f,
                    "sensor `{node}` has outgoing edges to [{}]",
                    to.join(", ")
                )
            }
            Violation::ActuatorNotLeaf { node, to } => {
                write!(
                    f,
                    "actuator `{node}` has outgoing edges to [{}]",
                    to.join(", ")
                )
            }
            Violation::Unreachable { node } => {
                write!(f, "node `{node}` is not reachable from the main node")
            }
        }
    }
}

impl SkillGraph {
    pub fn new(maneuver: impl Into<String>) -> Self {
        Self {
            maneuver: maneuver.into(),
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("skill graph serializes")
    }

    pub fn node(&self, id: &str) -> Option<&SkillNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.node(id).is_some()
    }

    pub fn edge(&self, from: &str, to: &str) -> Option<&SkillEdge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    pub(crate) fn edge_mut(&mut self, from: &str, to: &str) -> Option<&mut SkillEdge> {
        self.edges.iter_mut().find(|e| e.from == from && e.to == to)
    }

    /// Ids of the skills `id` directly depends on, in edge order.
    pub fn dependencies<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.from == id)
            .map(|e| e.to.as_str())
    }

    /// Ids of the skills directly depending on `id`, in edge order.
    pub fn dependents<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.to == id)
            .map(|e| e.from.as_str())
    }

    pub fn main_node(&self) -> Option<&SkillNode> {
        let mut mains = self
            .nodes
            .iter()
            .filter(|n| n.category == SkillCategory::Main);
        match (mains.next(), mains.next()) {
            (Some(m), None) => Some(m),
            _ => None,
        }
    }

    pub fn add_skill(&mut self, node: SkillNode) -> Result<(), GraphError> {
        if node.id.is_empty() {
            return Err(GraphError::EmptyId);
        }
        if self.contains(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        self.nodes.push(node);
        Ok(())
    }

    /// Adds the dependency `from -> to`. On error the graph is left unchanged.
    pub fn add_dependency(&mut self, from: &str, to: &str) -> Result<(), GraphError> {
        for id in [from, to] {
            if !self.contains(id) {
                return Err(GraphError::UnknownNode(id.to_string()));
            }
        }
        if self.edge(from, to).is_some() {
            return Err(GraphError::DuplicateEdge {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        // The new edge closes a cycle iff `from` is already reachable from `to`.
        if from == to || self.reaches(to, from) {
            return Err(GraphError::CycleIntroduced {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        self.edges.push(SkillEdge {
            from: from.to_string(),
            to: to.to_string(),
            requirements: Vec::new(),
        });
        Ok(())
    }

    fn reaches(&self, start: &str, target: &str) -> bool {
        let mut seen = HashSet::new();
        let mut stack = vec![start];
        while let Some(id) = stack.pop() {
            if id == target {
                return true;
            }
            if seen.insert(id) {
                stack.extend(self.dependencies(id));
            }
        }
        false
    }

    /// Checks every structural invariant; an empty list means the graph is well-formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (index, n) in self.nodes.iter().enumerate() {
            if n.id.is_empty() {
                out.push(Violation::EmptyId { index });
            } else {
                *counts.entry(n.id.as_str()).or_default() += 1;
            }
        }
        for (id, c) in &counts {
            if *c > 1 {
                out.push(Violation::DuplicateNodeId { id: id.to_string() });
            }
        }

        let categories: HashMap<&str, SkillCategory> = self
            .nodes
            .iter()
            .map(|n| (n.id.as_str(), n.category))
            .collect();

        // Edges that are safe to use for the graph-shape checks below.
        let mut seen_edges = HashSet::new();
        let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            if e.from == e.to {
                out.push(Violation::SelfLoop {
                    node: e.from.clone(),
                });
                continue;
            }
            let missing = [&e.from, &e.to]
                .into_iter()
                .find(|id| !categories.contains_key(id.as_str()));
            if let Some(missing) = missing {
                out.push(Violation::DanglingEdge {
                    from: e.from.clone(),
                    to: e.to.clone(),
                    missing: missing.clone(),
                });
                continue;
            }
            if !seen_edges.insert((e.from.as_str(), e.to.as_str())) {
                out.push(Violation::DuplicateEdge {
                    from: e.from.clone(),
                    to: e.to.clone(),
                });
                continue;
            }
            adjacency.entry(&e.from).or_default().push(&e.to);
        }

        let on_cycle: Vec<String> = counts
            .keys()
            .filter(|id| {
                adjacency
                    .get(*id)
                    .into_iter()
                    .flatten()
                    .any(|next| reachable(&adjacency, next, id))
            })
            .map(|id| id.to_string())
            .collect();
        if !on_cycle.is_empty() {
            out.push(Violation::Cycle { nodes: on_cycle });
        }

        let mains: Vec<&str> = self
            .nodes
            .iter()
            .filter(|n| n.category == SkillCategory::Main)
            .map(|n| n.id.as_str())
            .collect();
        match mains.len() {
            0 => out.push(Violation::NoMainNode),
            1 => {}
            _ => out.push(Violation::MultipleMainNodes {
                ids: mains.iter().map(|s| s.to_string()).collect(),
            }),
        }
        for main in BTreeSet::from_iter(mains.iter().copied()) {
            let from: Vec<String> = adjacency
                .iter()
                .filter(|(_, tos)| tos.contains(&main))
                .map(|(f, _)| f.to_string())
                .collect();
            if !from.is_empty() {
                out.push(Violation::MainHasIncoming {
                    main: main.to_string(),
                    from,
                });
            }
        }

        for (from, tos) in &adjacency {
            let to: Vec<String> = tos.iter().map(|s| s.to_string()).collect();
            match categories.get(from) {
                Some(SkillCategory::Sensor) => out.push(Violation::SensorNotLeaf {
                    node: from.to_string(),
                    to,
                }),
                Some(SkillCategory::Actuator) => out.push(Violation::ActuatorNotLeaf {
                    node: from.to_string(),
                    to,
                }),
                _ => {}
            }
        }

        if let [main] = mains.as_slice() {
            let mut seen = HashSet::new();
            let mut queue = VecDeque::from([*main]);
            while let Some(id) = queue.pop_front() {
                if seen.insert(id) {
                    queue.extend(adjacency.get(id).into_iter().flatten().copied());
                }
            }
            for id in counts.keys() {
                if !seen.contains(id) {
                    out.push(Violation::Unreachable {
                        node: id.to_string(),
                    });
                }
            }
        }

        out
    }

    pub fn ensure_valid(&self) -> Result<(), GraphError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(GraphError::InvalidGraph(violations))
        }
    }

    /// Kahn's algorithm, always picking the smallest ready id.
    pub fn topological_order(&self) -> Result<Vec<String>, GraphError> {
        self.ensure_valid()?;
        let mut indegree: BTreeMap<&str, usize> =
            self.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
        for e in &self.edges {
            *indegree.get_mut(e.to.as_str()).expect("validated") += 1;
        }
        let mut ready: BTreeSet<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.pop_first() {
            order.push(id.to_string());
            for next in self.dependencies(id) {
                let d = indegree.get_mut(next).expect("validated");
                *d -= 1;
                if *d == 0 {
                    ready.insert(next);
                }
            }
        }
        Ok(order)
    }

    /// Renders the graph as a Graphviz digraph with category fill colors.
    pub fn export_dot(&self) -> Result<String, GraphError> {
        self.ensure_valid()?;
        let mut out = format!("digraph {} {{\n", dot_quote(&self.maneuver));
        out.push_str("  rankdir=TB;\n  node [shape=box, style=\"rounded,filled\"];\n");
        for n in &self.nodes {
            out.push_str(&format!(
                "  {} [label={}, fillcolor={}];\n",
                dot_quote(&n.id),
                dot_quote(&n.name),
                dot_quote(n.category.fill_color())
            ));
        }
        for e in &self.edges {
            out.push_str(&format!("  {} -> {}", dot_quote(&e.from), dot_quote(&e.to)));
            if !e.requirements.is_empty() {
                out.push_str(&format!(
                    " [label={}]",
                    dot_quote(&e.requirements.join(", "))
                ));
            }
            out.push_str(";\n");
        }
        out.push_str("}\n");
        Ok(out)
    }
}

fn reachable(adjacency: &BTreeMap<&str, Vec<&str>>, start: &str, target: &str) -> bool {
    let mut seen = HashSet::new();
    let mut stack = vec![start];
    while let Some(id) = stack.pop() {
        if id == target {
            return true;
        }
        if seen.insert(id) {
            stack.extend(adjacency.get(id).into_iter().flatten().copied());
        }
    }
    false
}

fn dot_quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

/// The Follow-Mode skill graph shipped with the crate.
///
/// The node and edge set is a reconstruction; the skills named in prose
/// (follow hard shoulder, control lateral dynamics, lane pose estimation,
/// lane marking perception) are present and the rest is illustrative.
pub fn follow_mode_example() -> SkillGraph {
    SkillGraph::from_json(include_str!("../data/follow_mode.json")).expect("shipped graph parses")
}
