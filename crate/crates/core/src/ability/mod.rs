//! Ability graphs: the runtime instantiation of a skill graph.
//!
//! Each skill becomes an ability node bound to the software components that
//! implement it and to the metrics evaluated there. Samples are ingested per
//! `(metric, component)`; [`AbilityGraph::propagate`] then computes every
//! node's performance level bottom-up and writes it to all of the node's
//! incoming edges. [`AbilityGraph::assess`] discretizes levels into
//! [`MonitorStatus`] values.
//!
//! A sample stays usable for the metric's grace window (in evaluation
//! cycles). Older or never-received samples count as level 0, so a silent
//! producer shows up as lost ability rather than frozen health.

mod monitor;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{SkillCategory, SkillGraph, Violation};
use crate::metrics::{AtomicMetric, CompositionRule, MetricCatalog, MetricError, PerformanceLevel};
use crate::quantity::{Quantity, Unit};

pub use monitor::{ConcurrentMonitor, CycleReport, SampleSender, SnapshotReader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyRelationType {
    MainNode,
    SubNode,
    DataSink,
    DataSource,
}

impl DependencyRelationType {
    pub fn for_category(category: SkillCategory) -> Self {
        match category {
            SkillCategory::Main => DependencyRelationType::MainNode,
            SkillCategory::Sensor => DependencyRelationType::DataSource,
            SkillCategory::Actuator => DependencyRelationType::DataSink,
            _ => DependencyRelationType::SubNode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Redundancy {
    #[default]
    Single,
    /// Components are redundant; the best one determines the metric level.
    Max,
}

/// Binding of one skill to components and metrics, as read from the binding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbilityBinding {
    pub components: Vec<String>,
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub rule: CompositionRule,
    #[serde(default)]
    pub redundancy: Redundancy,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BindingDocument {
    pub bindings: BTreeMap<String, AbilityBinding>,
}

impl BindingDocument {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbilityNode {
    pub skill_id: String,
    pub relation_type: DependencyRelationType,
    pub category: SkillCategory,
    pub component_bindings: Vec<String>,
    pub metric_ids: Vec<String>,
    pub rule: CompositionRule,
    pub redundancy_rule: Redundancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSample {
    pub metric_id: String,
    pub component_id: String,
    pub value: f64,
    pub unit: Unit,
    pub timestamp: f64,
}

impl SignalSample {
    pub fn new(
        metric_id: &str,
        component_id: &str,
        value: f64,
        unit: &str,
        timestamp: f64,
    ) -> Self {
        Self {
            metric_id: metric_id.to_string(),
            component_id: component_id.to_string(),
            value,
            unit: Unit::new(unit).expect("non-empty unit literal"),
            timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonitorStatus {
    Ok,
    Degraded,
    Failed,
}

impl fmt::Display for MonitorStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MonitorStatus::Ok => "ok",
            MonitorStatus::Degraded => "degraded",
            MonitorStatus::Failed => "failed",
        })
    }
}

/// Level thresholds: `Failed` below `failed_below`, `Degraded` below
/// `degraded_below`, `Ok` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawThresholds")]
pub struct MonitorThresholds {
    degraded_below: f64,
    failed_below: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    degraded_below: f64,
    failed_below: f64,
}

impl TryFrom<RawThresholds> for MonitorThresholds {
    type Error = RuntimeError;

    fn try_from(raw: RawThresholds) -> Result<Self, Self::Error> {
        MonitorThresholds::new(raw.degraded_below, raw.failed_below)
    }
}

impl Default for MonitorThresholds {
    fn default() -> Self {
        Self {
            degraded_below: 0.5,
            failed_below: 0.1,
        }
    }
}

impl MonitorThresholds {
    pub fn new(degraded_below: f64, failed_below: f64) -> Result<Self, RuntimeError> {
        if !(0.0 <= failed_below && failed_below < degraded_below && degraded_below <= 1.0) {
            return Err(RuntimeError::InvalidThresholds {
                degraded_below,
                failed_below,
            });
        }
        Ok(Self {
            degraded_below,
            failed_below,
        })
    }

    pub fn degraded_below(&self) -> f64 {
        self.degraded_below
    }

    pub fn failed_below(&self) -> f64 {
        self.failed_below
    }

    pub fn status(&self, level: PerformanceLevel) -> MonitorStatus {
        let l = level.value();
        if l < self.failed_below {
            MonitorStatus::Failed
        } else if l < self.degraded_below {
            MonitorStatus::Degraded
        } else {
            MonitorStatus::Ok
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub nodes: BTreeMap<String, MonitorStatus>,
    /// Status of the main node.
    pub overall: MonitorStatus,
}

/// Published read-only view of one evaluation cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub cycle: u64,
    pub levels: BTreeMap<String, PerformanceLevel>,
    pub status: BTreeMap<String, MonitorStatus>,
    pub overall: MonitorStatus,
}

/// One line of the evaluation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationRecord {
    pub t: f64,
    pub levels: BTreeMap<String, f64>,
    pub status: BTreeMap<String, MonitorStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct StoredSample {
    value: f64,
    timestamp: f64,
    cycle: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbilityGraph {
    maneuver: String,
    /// In topological order of the source graph.
    nodes: Vec<AbilityNode>,
    edges: Vec<(String, String)>,
    index: HashMap<String, usize>,
    children: Vec<Vec<usize>>,
    catalog: MetricCatalog,
    /// Atomic metric id -> components allowed to report it.
    producers: BTreeMap<String, BTreeSet<String>>,
    samples: BTreeMap<(String, String), StoredSample>,
    levels: Vec<PerformanceLevel>,
    status: Vec<MonitorStatus>,
    cycle: u64,
}

impl AbilityGraph {
    /// Builds an ability graph with every level at 1.0 and every status `Ok`.
    pub fn instantiate(
        skill_graph: &SkillGraph,
        bindings: &BTreeMap<String, AbilityBinding>,
        catalog: MetricCatalog,
    ) -> Result<Self, RuntimeError> {
        let order = skill_graph
            .topological_order()
            .map_err(|_| RuntimeError::InvalidGraph(skill_graph.validate()))?;
        if let Some(extra) = bindings.keys().find(|id| !skill_graph.contains(id)) {
            return Err(RuntimeError::StructureMismatch(extra.clone()));
        }

        let mut nodes = Vec::with_capacity(order.len());
        let mut producers: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for id in &order {
            let skill = skill_graph.node(id).expect("ordered ids exist");
            let binding = bindings
                .get(id)
                .ok_or_else(|| RuntimeError::MissingBinding(id.clone()))?;
            if binding.components.is_empty() {
                return Err(RuntimeError::NoComponents(id.clone()));
            }
            if binding.redundancy == Redundancy::Max && binding.components.len() < 2 {
                return Err(RuntimeError::InsufficientRedundancy(id.clone()));
            }
            for metric_id in &binding.metrics {
                let metric = catalog
                    .get(metric_id)
                    .ok_or_else(|| RuntimeError::UnknownMetric {
                        node: Some(id.clone()),
                        metric: metric_id.clone(),
                    })?;
                for atom in metric.history() {
                    producers
                        .entry(atom)
                        .or_default()
                        .extend(binding.components.iter().cloned());
                }
            }
            nodes.push(AbilityNode {
                skill_id: id.clone(),
                relation_type: DependencyRelationType::for_category(skill.category),
                category: skill.category,
                component_bindings: binding.components.clone(),
                metric_ids: binding.metrics.clone(),
                rule: binding.rule,
                redundancy_rule: binding.redundancy,
            });
        }

        let index: HashMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.skill_id.clone(), i))
            .collect();
        let mut children = vec![Vec::new(); nodes.len()];
        let mut edges = Vec::with_capacity(skill_graph.edges.len());
        for e in &skill_graph.edges {
            children[index[&e.from]].push(index[&e.to]);
            edges.push((e.from.clone(), e.to.clone()));
        }
        let n = nodes.len();
        Ok(Self {
            maneuver: skill_graph.maneuver.clone(),
            nodes,
            edges,
            index,
            children,
            catalog,
            producers,
            samples: BTreeMap::new(),
            levels: vec![PerformanceLevel::FULL; n],
            status: vec![MonitorStatus::Ok; n],
            cycle: 0,
        })
    }

    pub fn maneuver(&self) -> &str {
        &self.maneuver
    }

    pub fn nodes(&self) -> &[AbilityNode] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&AbilityNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn catalog(&self) -> &MetricCatalog {
        &self.catalog
    }

    /// Number of completed propagation cycles.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn main_id(&self) -> &str {
        // Topological order puts the unique source first.
        &self.nodes[0].skill_id
    }

    /// True if node ids and edges coincide with `skill_graph`.
    pub fn is_isomorphic_to(&self, skill_graph: &SkillGraph) -> bool {
        let ours: BTreeSet<&str> = self.nodes.iter().map(|n| n.skill_id.as_str()).collect();
        let theirs: BTreeSet<&str> = skill_graph.nodes.iter().map(|n| n.id.as_str()).collect();
        let our_edges: BTreeSet<(&str, &str)> = self
            .edges
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        let their_edges: BTreeSet<(&str, &str)> = skill_graph
            .edges
            .iter()
            .map(|e| (e.from.as_str(), e.to.as_str()))
            .collect();
        ours == theirs && our_edges == their_edges && self.nodes.len() == skill_graph.nodes.len()
    }

    /// Stores the latest value for `(metric_id, component_id)`; levels are
    /// only updated by the next [`propagate`](Self::propagate).
    pub fn ingest_sample(&mut self, sample: SignalSample) -> Result<(), RuntimeError> {
        let atom = self.catalog.atomic(&sample.metric_id);
        let (Some(atom), Some(producers)) = (atom, self.producers.get(&sample.metric_id)) else {
            return Err(RuntimeError::UnknownMetric {
                node: None,
                metric: sample.metric_id,
            });
        };
        if !producers.contains(&sample.component_id) {
            return Err(RuntimeError::UnknownComponent {
                metric: sample.metric_id,
                component: sample.component_id,
            });
        }
        if !sample.timestamp.is_finite() {
            return Err(RuntimeError::InvalidTimestamp(sample.timestamp));
        }
        // Rejects unit mismatches, negative variances and non-finite values.
        atom.evaluate(&Quantity {
            value: sample.value,
            unit: sample.unit.clone(),
        })?;
        let key = (sample.metric_id, sample.component_id);
        if let Some(stored) = self.samples.get(&key) {
            if sample.timestamp < stored.timestamp {
                return Err(RuntimeError::StaleTimestamp {
                    metric: key.0,
                    component: key.1,
                    stored: stored.timestamp,
                    received: sample.timestamp,
                });
            }
        }
        self.samples.insert(
            key,
            StoredSample {
                value: sample.value,
                timestamp: sample.timestamp,
                cycle: self.cycle,
            },
        );
        Ok(())
    }

    /// Level of `atom` from the freshest usable sample of any of `components`.
    fn atom_level(&self, atom: &AtomicMetric, components: &[String]) -> PerformanceLevel {
        let freshest = components
            .iter()
            .filter_map(|c| self.samples.get(&(atom.id.clone(), c.clone())))
            .filter(|s| self.cycle - s.cycle <= u64::from(atom.grace_cycles))
            .max_by(|a, b| {
                a.timestamp
                    .total_cmp(&b.timestamp)
                    .then(a.cycle.cmp(&b.cycle))
            });
        match freshest {
            Some(s) => atom
                .evaluate(&Quantity {
                    value: s.value,
                    unit: atom.spec.unit(),
                })
                .unwrap_or(PerformanceLevel::ZERO),
            None => PerformanceLevel::ZERO,
        }
    }

    /// Own-metric level of a node restricted to `components`.
    fn metrics_level(&self, node: &AbilityNode, components: &[String]) -> f64 {
        let levels: Vec<f64> = node
            .metric_ids
            .iter()
            .map(|id| {
                self.catalog
                    .evaluate_with(id, &mut |atom| self.atom_level(atom, components))
                    .map(PerformanceLevel::value)
                    .unwrap_or(0.0)
            })
            .collect();
        node.rule.combine_equal(&levels)
    }

    /// Level of a node's own metrics, or `None` if it has none.
    pub fn own_metric_level(&self, id: &str) -> Option<PerformanceLevel> {
        let node = self.node(id)?;
        self.own_level(node).map(PerformanceLevel::saturating)
    }

    fn own_level(&self, node: &AbilityNode) -> Option<f64> {
        if node.metric_ids.is_empty() {
            return None;
        }
        Some(match node.redundancy_rule {
            Redundancy::Single => self.metrics_level(node, &node.component_bindings),
            Redundancy::Max => node
                .component_bindings
                .iter()
                .map(|c| self.metrics_level(node, std::slice::from_ref(c)))
                .fold(0.0, f64::max),
        })
    }

    /// Recomputes all levels bottom-up from the sample store and advances the cycle.
    pub fn propagate(&mut self) {
        for i in (0..self.nodes.len()).rev() {
            let node = &self.nodes[i];
            let mut inputs: Vec<f64> = self.own_level(node).into_iter().collect();
            inputs.extend(self.children[i].iter().map(|&c| self.levels[c].value()));
            let level = if inputs.is_empty() {
                1.0
            } else {
                node.rule.combine_equal(&inputs)
            };
            self.levels[i] = PerformanceLevel::saturating(level);
        }
        self.cycle += 1;
    }

    pub fn assess(&mut self, thresholds: &MonitorThresholds) -> Assessment {
        for (status, level) in self.status.iter_mut().zip(&self.levels) {
            *status = thresholds.status(*level);
        }
        Assessment {
            nodes: self.status_map(),
            overall: self.status[0],
        }
    }

    pub fn level(&self, id: &str) -> Option<PerformanceLevel> {
        self.index.get(id).map(|&i| self.levels[i])
    }

    /// Weight of edge `from -> to`: the level of `to`.
    pub fn edge_level(&self, from: &str, to: &str) -> Option<PerformanceLevel> {
        self.edges
            .iter()
            .any(|(a, b)| a == from && b == to)
            .then(|| self.level(to))
            .flatten()
    }

    pub fn levels(&self) -> BTreeMap<String, PerformanceLevel> {
        self.nodes
            .iter()
            .zip(&self.levels)
            .map(|(n, l)| (n.skill_id.clone(), *l))
            .collect()
    }

    pub fn edge_levels(&self) -> BTreeMap<(String, String), PerformanceLevel> {
        self.edges
            .iter()
            .map(|(a, b)| ((a.clone(), b.clone()), self.levels[self.index[b]]))
            .collect()
    }

    pub fn status_map(&self) -> BTreeMap<String, MonitorStatus> {
        self.nodes
            .iter()
            .zip(&self.status)
            .map(|(n, s)| (n.skill_id.clone(), *s))
            .collect()
    }

    pub fn overall_status(&self) -> MonitorStatus {
        self.status[0]
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            cycle: self.cycle,
            levels: self.levels(),
            status: self.status_map(),
            overall: self.overall_status(),
        }
    }

    pub fn evaluation_record(&self, t: f64) -> EvaluationRecord {
        EvaluationRecord {
            t,
            levels: self
                .levels()
                .into_iter()
                .map(|(k, v)| (k, v.value()))
                .collect(),
            status: self.status_map(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("skill graph is invalid ({} violations)", .0.len())]
    InvalidGraph(Vec<Violation>),
    #[error("no binding for skill `{0}`")]
    MissingBinding(String),
    #[error("binding for `{0}` does not match any skill")]
    StructureMismatch(String),
    #[error("unknown metric `{metric}`{}", .node.as_ref().map(|n| format!(" bound at `{n}`")).unwrap_or_default())]
    UnknownMetric {
        node: Option<String>,
        metric: String,
    },
    #[error("component `{component}` is not bound to a node evaluating `{metric}`")]
    UnknownComponent { metric: String, component: String },
    #[error("ability `{0}` has no implementing component")]
    NoComponents(String),
    #[error("ability `{0}` declares redundancy with fewer than two components")]
    InsufficientRedundancy(String),
    #[error("sample for ({metric}, {component}) at t={received} is older than stored t={stored}")]
    StaleTimestamp {
        metric: String,
        component: String,
        stored: f64,
        received: f64,
    },
    #[error("non-finite timestamp {0}")]
    InvalidTimestamp(f64),
    #[error("thresholds need 0 <= failed_below ({failed_below}) < degraded_below ({degraded_below}) <= 1")]
    InvalidThresholds {
        degraded_below: f64,
        failed_below: f64,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl RuntimeError {
    /// Whether this is a unit mismatch.
    pub fn is_unit_mismatch(&self) -> bool {
        matches!(self, RuntimeError::Metric(MetricError::UnitMismatch { .. }))
    }
}
