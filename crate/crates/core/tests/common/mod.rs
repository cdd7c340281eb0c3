//! Brute-force oracles shared by the property tests and the acceptance suite.
//!
//! Nothing here calls into the library's algorithms; only its plain data
//! types are used.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedMutRandom, IndexedRandom};
use rand::Rng;
use skillgraph::graph::{SkillCategory, SkillEdge, SkillGraph, SkillNode};

/// Transitive closure by Warshall's algorithm over an adjacency matrix.
pub fn closure(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for &(a, b) in edges {
        r[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

pub fn has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    let r = closure(n, edges);
    (0..n).any(|i| r[i][i])
}

/// Rule names a document violates, computed from scratch. Only meaningful
/// for graphs with unique ids.
pub fn oracle_rules(g: &SkillGraph) -> BTreeSet<&'static str> {
    let mut rules = BTreeSet::new();
    let ids: Vec<&str> = g.nodes.iter().map(|n| n.id.as_str()).collect();
    if ids.iter().any(|id| id.is_empty()) {
        rules.insert("empty_id");
    }
    for i in 0..ids.len() {
        for j in 0..i {
            if !ids[i].is_empty() && ids[i] == ids[j] {
                rules.insert("duplicate_node_id");
            }
        }
    }
    let index = |id: &str| ids.iter().position(|x| *x == id);
    let mut clean: Vec<(usize, usize)> = Vec::new();
    for e in &g.edges {
        if e.from == e.to {
            rules.insert("self_loop");
            continue;
        }
        match (index(&e.from), index(&e.to)) {
            (Some(a), Some(b)) => {
                if clean.contains(&(a, b)) {
                    rules.insert("duplicate_edge");
                } else {
                    clean.push((a, b));
                }
            }
            _ => {
                rules.insert("dangling_edge");
            }
        }
    }
    let n = ids.len();
    if has_cycle(n, &clean) {
        rules.insert("cycle");
    }
    let mains: Vec<usize> = (0..n)
        .filter(|&i| g.nodes[i].category == SkillCategory::Main)
        .collect();
    match mains.len() {
        0 => {
            rules.insert("no_main_node");
        }
        1 => {
            let r = closure(n, &clean);
            let m = mains[0];
            if (0..n).any(|i| i != m && !r[m][i] && !ids[i].is_empty()) {
                rules.insert("unreachable");
            }
        }
        _ => {
            rules.insert("multiple_main_nodes");
        }
    }
    for &(a, b) in &clean {
        if mains.contains(&b) {
            rules.insert("main_has_incoming");
        }
        match g.nodes[a].category {
            SkillCategory::Sensor => {
                rules.insert("sensor_not_leaf");
            }
            SkillCategory::Actuator => {
                rules.insert("actuator_not_leaf");
            }
            _ => {}
        }
    }
    rules
}

pub fn ids_unique(g: &SkillGraph) -> bool {
    let set: BTreeSet<&str> = g.nodes.iter().map(|n| n.id.as_str()).collect();
    set.len() == g.nodes.len()
}

const CATEGORIES: [SkillCategory; 7] = [
    SkillCategory::Main,
    SkillCategory::ObservableExternalBehavior,
    SkillCategory::Perception,
    SkillCategory::Planning,
    SkillCategory::Action,
    SkillCategory::Sensor,
    SkillCategory::Actuator,
];

fn edge(from: &str, to: &str) -> SkillEdge {
    SkillEdge {
        from: from.into(),
        to: to.into(),
        requirements: Vec::new(),
    }
}

/// Applies one random structural mutation to a graph document.
pub fn mutate<R: Rng>(g: &mut SkillGraph, rng: &mut R) {
    let pick_id = |g: &SkillGraph, rng: &mut R| -> String {
        g.nodes
            .choose(rng)
            .map(|n| n.id.clone())
            .unwrap_or_else(|| "x".into())
    };
    match rng.random_range(0..10) {
        0 | 1 => {
            let (a, b) = (pick_id(g, rng), pick_id(g, rng));
            g.edges.push(edge(&a, &b));
        }
        2 => {
            if !g.edges.is_empty() {
                let i = rng.random_range(0..g.edges.len());
                g.edges.remove(i);
            }
        }
        3 => {
            if let Some(n) = g.nodes.choose_mut(rng) {
                n.category = *CATEGORIES.choose(rng).unwrap();
            }
        }
        4 => {
            let id = format!("n{}", rng.random_range(0..1000));
            let cat = *CATEGORIES.choose(rng).unwrap();
            g.nodes.push(SkillNode::new(id.clone(), id, cat));
        }
        5 => {
            if !g.nodes.is_empty() {
                let i = rng.random_range(0..g.nodes.len());
                g.nodes.remove(i);
            }
        }
        6 => {
            let a = pick_id(g, rng);
            g.edges.push(edge(&a, "ghost"));
        }
        7 => {
            if let Some(e) = g.edges.choose(rng).cloned() {
                g.edges.push(edge(&e.to, &e.from));
            }
        }
        8 => {
            if let Some(e) = g.edges.choose(rng).cloned() {
                g.edges.push(e);
            }
        }
        _ => {
            if let Some(n) = g.nodes.choose(rng).cloned() {
                g.nodes
                    .push(SkillNode::new(n.id.clone(), "dup", n.category));
            }
        }
    }
}

/// Random connected DAG: node 0 is Main, each later node gets a parent
/// among earlier ones plus optional extra parents.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize) -> (SkillGraph, Vec<(usize, usize)>) {
    let mut g = SkillGraph::new("random");
    let mut edges = Vec::new();
    for i in 0..n {
        let cat = if i == 0 {
            SkillCategory::Main
        } else {
            SkillCategory::Perception
        };
        g.add_skill(SkillNode::new(format!("n{i}"), format!("n{i}"), cat))
            .unwrap();
    }
    for i in 1..n {
        let first = rng.random_range(0..i);
        edges.push((first, i));
        for j in 0..i {
            if j != first && rng.random_bool(0.3) {
                edges.push((j, i));
            }
        }
    }
    for &(a, b) in &edges {
        g.add_dependency(&format!("n{a}"), &format!("n{b}"))
            .unwrap();
    }
    (g, edges)
}

/// Node level by direct recursion over the children, from raw metric levels.
pub fn recursive_level(
    node: usize,
    children: &BTreeMap<usize, Vec<usize>>,
    own: &BTreeMap<usize, Vec<f64>>,
    use_mean: &BTreeMap<usize, bool>,
) -> f64 {
    let combine = |xs: &[f64], mean: bool| -> f64 {
        if mean {
            xs.iter().sum::<f64>() / xs.len() as f64
        } else {
            xs.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    };
    let mean = use_mean[&node];
    let mut inputs = Vec::new();
    if let Some(levels) = own.get(&node).filter(|l| !l.is_empty()) {
        inputs.push(combine(levels, mean));
    }
    for &c in children.get(&node).into_iter().flatten() {
        inputs.push(recursive_level(c, children, own, use_mean));
    }
    if inputs.is_empty() {
        1.0
    } else {
        combine(&inputs, mean)
    }
}

/// Independent ASIL rule: with every class at least 1, S + E + C of
/// 10, 9, 8, 7 give D, C, B, A; anything else is QM.
pub fn asil_by_sum(s: u8, e: u8, c: u8) -> &'static str {
    if s == 0 || e == 0 || c == 0 {
        return "QM";
    }
    match s + e + c {
        10 => "D",
        9 => "C",
        8 => "B",
        7 => "A",
        _ => "QM",
    }
}

/// Determination grid as printed in the standard (rows S1..S3 x E1..E4,
/// columns C1..C3).
pub const ASIL_GRID: [[[&str; 3]; 4]; 3] = [
    [
        ["QM", "QM", "QM"],
        ["QM", "QM", "QM"],
        ["QM", "QM", "A"],
        ["QM", "A", "B"],
    ],
    [
        ["QM", "QM", "QM"],
        ["QM", "QM", "A"],
        ["QM", "A", "B"],
        ["A", "B", "C"],
    ],
    [
        ["QM", "QM", "A"],
        ["QM", "A", "B"],
        ["A", "B", "C"],
        ["B", "C", "D"],
    ],
];

pub fn asil_by_grid(s: u8, e: u8, c: u8) -> &'static str {
    if s == 0 || e == 0 || c == 0 {
        return "QM";
    }
    ASIL_GRID[s as usize - 1][e as usize - 1][c as usize - 1]
}

/// Minimal DOT reader: returns (declared nodes, edges) or an error for any
/// line that is not a node statement, edge statement, attribute default or
/// brace.
pub fn parse_dot(text: &str) -> Result<(BTreeSet<String>, Vec<(String, String)>), String> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().ok_or("empty")?;
    if !(first.starts_with("digraph ") && first.ends_with('{')) {
        return Err(format!("bad header: {first}"));
    }
    let mut nodes = BTreeSet::new();
    let mut edges = Vec::new();
    let mut closed = false;
    for line in lines {
        if closed {
            return Err("content after closing brace".into());
        }
        if line == "}" {
            closed = true;
            continue;
        }
        let stmt = line
            .strip_suffix(';')
            .ok_or_else(|| format!("missing ';': {line}"))?;
        if stmt.starts_with("rankdir=") || stmt.starts_with("node [") || stmt.starts_with("edge [")
        {
            continue;
        }
        let (head, attrs) = match stmt.find(" [") {
            Some(i) => (&stmt[..i], &stmt[i + 1..]),
            None => (stmt, ""),
        };
        if !attrs.is_empty() && !(attrs.starts_with('[') && attrs.ends_with(']')) {
            return Err(format!("bad attribute list: {line}"));
        }
        let ids = split_ids(head)?;
        match ids.as_slice() {
            [id] => {
                nodes.insert(id.clone());
            }
            [a, b] => edges.push((a.clone(), b.clone())),
            _ => return Err(format!("bad statement: {line}")),
        }
    }
    if !closed {
        return Err("missing closing brace".into());
    }
    Ok((nodes, edges))
}

fn split_ids(head: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = head.trim();
    loop {
        let inner = rest
            .strip_prefix('"')
            .ok_or_else(|| format!("unquoted id in `{head}`"))?;
        let mut id = String::new();
        let mut chars = inner.char_indices();
        let end = loop {
            match chars.next() {
                Some((_, '\\')) => {
                    if let Some((_, c)) = chars.next() {
                        id.push(c);
                    }
                }
                Some((i, '"')) => break i,
                Some((_, c)) => id.push(c),
                None => return Err(format!("unterminated id in `{head}`")),
            }
        };
        out.push(id);
        rest = inner[end + 1..].trim();
        if rest.is_empty() {
            return Ok(out);
        }
        rest = rest
            .strip_prefix("->")
            .ok_or_else(|| format!("expected `->` in `{head}`"))?
            .trim();
    }
}

/// A random ability-graph case: every metric is a `max_limit` with
/// threshold 1 on a dimensionless signal, so level = 1 - |m|.
pub struct PropagationCase {
    pub graph: SkillGraph,
    pub bindings: BTreeMap<String, skillgraph::ability::AbilityBinding>,
    pub catalog: skillgraph::metrics::MetricCatalog,
    /// (atom id, component id, measurement) to ingest.
    pub samples: Vec<(String, String, f64)>,
    pub children: BTreeMap<usize, Vec<usize>>,
    pub own: BTreeMap<usize, Vec<f64>>,
    pub use_mean: BTreeMap<usize, bool>,
    pub n: usize,
}

pub fn random_propagation_case<R: Rng>(rng: &mut R, n: usize) -> PropagationCase {
    use skillgraph::ability::{AbilityBinding, Redundancy};
    use skillgraph::metrics::{AtomicMetric, CompositionRule, Metric, MetricCatalog, MetricSpec};
    use skillgraph::quantity::Unit;

    let (graph, edges) = random_dag(rng, n);
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (a, b) in edges {
        children.entry(a).or_default().push(b);
    }
    let mut catalog = MetricCatalog::default();
    let mut bindings = BTreeMap::new();
    let mut samples = Vec::new();
    let mut own = BTreeMap::new();
    let mut use_mean = BTreeMap::new();
    for i in 0..n {
        let mean = rng.random_bool(0.5);
        use_mean.insert(i, mean);
        let component = format!("comp{i}");
        let mut metrics = Vec::new();
        let mut levels = Vec::new();
        for k in 0..rng.random_range(0..3) {
            let id = format!("m{i}_{k}");
            catalog
                .insert(Metric::Atomic(AtomicMetric::new(
                    id.clone(),
                    MetricSpec::MaxLimit {
                        limit: 1.0,
                        unit: Unit::new("1").unwrap(),
                    },
                )))
                .unwrap();
            // Occasionally out of range on either side to exercise clamping.
            let m: f64 = rng.random_range(-1.2..1.2);
            levels.push((1.0 - m.abs()).clamp(0.0, 1.0));
            samples.push((id.clone(), component.clone(), m));
            metrics.push(id);
        }
        own.insert(i, levels);
        bindings.insert(
            format!("n{i}"),
            AbilityBinding {
                components: vec![component],
                metrics,
                rule: if mean {
                    CompositionRule::WeightedMean
                } else {
                    CompositionRule::Min
                },
                redundancy: Redundancy::Single,
            },
        );
    }
    PropagationCase {
        graph,
        bindings,
        catalog,
        samples,
        children,
        own,
        use_mean,
        n,
    }
}

impl PropagationCase {
    pub fn oracle(&self, node: usize) -> f64 {
        recursive_level(node, &self.children, &self.own, &self.use_mean)
    }

    pub fn instantiate(&self) -> skillgraph::ability::AbilityGraph {
        let mut ag = skillgraph::ability::AbilityGraph::instantiate(
            &self.graph,
            &self.bindings,
            self.catalog.clone(),
        )
        .unwrap();
        for (metric, comp, value) in &self.samples {
            ag.ingest_sample(skillgraph::ability::SignalSample::new(
                metric, comp, *value, "1", 0.0,
            ))
            .unwrap();
        }
        ag
    }
}
