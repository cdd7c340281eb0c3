//! Performance metrics: atomic metrics normalize one measurement into a
//! performance level in `[0, 1]`; composed metrics aggregate other metrics
//! under weights and remember which atomic metrics they were built from.
//!
//! The composition history is what keeps correlated information from being
//! fused twice: two children may only share atomic metrics that the
//! composition names explicitly in `allow_shared`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantity::{Quantity, Unit};
use crate::requirements::{derive_metric_template, RequirementSet};

/// Default number of evaluation cycles a sample stays valid.
pub const DEFAULT_GRACE_CYCLES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    MaxLimit,
    MinDistance,
    MaxOvershoot,
    Range,
    VarianceBound,
    ValidityFlag,
    SteadyStateOffset,
    Overshoot,
}

/// Normalization rule of an atomic metric together with its thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub enum MetricSpec {
    MaxLimit {
        limit: f64,
        unit: Unit,
    },
    MaxOvershoot {
        limit: f64,
        unit: Unit,
    },
    SteadyStateOffset {
        limit: f64,
        unit: Unit,
    },
    Overshoot {
        limit: f64,
        unit: Unit,
    },
    /// Full performance at `minimum + band`, zero at `minimum` and below.
    MinDistance {
        minimum: f64,
        band: f64,
        unit: Unit,
    },
    /// Full performance inside `[lower, upper]`, falling to zero `band` outside.
    Range {
        lower: f64,
        upper: f64,
        band: f64,
        unit: Unit,
    },
    VarianceBound {
        bound: f64,
        unit: Unit,
    },
    ValidityFlag,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    band: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<Unit>,
}

impl TryFrom<RawSpec> for MetricSpec {
    type Error = MetricError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        let bad = |why: &str| MetricError::InvalidSpec(format!("{:?}: {why}", raw.kind));
        let unit = || raw.unit.clone().ok_or_else(|| bad("missing `unit`"));
        let threshold = || raw.threshold.ok_or_else(|| bad("missing `threshold`"));
        let no_bounds = || {
            if raw.lower.is_some() || raw.upper.is_some() {
                Err(bad("`lower`/`upper` only apply to range metrics"))
            } else {
                Ok(())
            }
        };
        let no_band = || {
            if raw.band.is_some() {
                Err(bad("`band` only applies to min_distance and range metrics"))
            } else {
                Ok(())
            }
        };
        let spec = match raw.kind {
            MetricKind::MaxLimit
            | MetricKind::MaxOvershoot
            | MetricKind::SteadyStateOffset
            | MetricKind::Overshoot => {
                no_bounds()?;
                no_band()?;
                let (limit, unit) = (threshold()?, unit()?);
                match raw.kind {
                    MetricKind::MaxLimit => MetricSpec::MaxLimit { limit, unit },
                    MetricKind::MaxOvershoot => MetricSpec::MaxOvershoot { limit, unit },
                    MetricKind::SteadyStateOffset => MetricSpec::SteadyStateOffset { limit, unit },
                    _ => MetricSpec::Overshoot { limit, unit },
                }
            }
            MetricKind::MinDistance => {
                no_bounds()?;
                let minimum = threshold()?;
                MetricSpec::MinDistance {
                    minimum,
                    band: raw.band.unwrap_or(minimum),
                    unit: unit()?,
                }
            }
            MetricKind::Range => {
                if raw.threshold.is_some() {
                    return Err(bad("range metrics take `lower` and `upper`"));
                }
                let (Some(lower), Some(upper)) = (raw.lower, raw.upper) else {
                    return Err(bad("missing `lower`/`upper`"));
                };
                MetricSpec::Range {
                    lower,
                    upper,
                    band: raw.band.unwrap_or(upper - lower),
                    unit: unit()?,
                }
            }
            MetricKind::VarianceBound => {
                no_bounds()?;
                no_band()?;
                MetricSpec::VarianceBound {
                    bound: threshold()?,
                    unit: unit()?,
                }
            }
            MetricKind::ValidityFlag => {
                no_bounds()?;
                no_band()?;
                if raw.threshold.is_some() {
                    return Err(bad("validity flags take no threshold"));
                }
                if raw.unit.as_ref().is_some_and(|u| *u != Unit::FLAG) {
                    return Err(bad("validity flags use the `flag` unit"));
                }
                MetricSpec::ValidityFlag
            }
        };
        spec.check()?;
        Ok(spec)
    }
}

impl From<MetricSpec> for RawSpec {
    fn from(spec: MetricSpec) -> Self {
        let kind = spec.kind();
        let mut raw = RawSpec {
            kind,
            threshold: None,
            lower: None,
            upper: None,
            band: None,
            unit: None,
        };
        match spec {
            MetricSpec::MaxLimit { limit, unit }
            | MetricSpec::MaxOvershoot { limit, unit }
            | MetricSpec::SteadyStateOffset { limit, unit }
            | MetricSpec::Overshoot { limit, unit } => {
                raw.threshold = Some(limit);
                raw.unit = Some(unit);
            }
            MetricSpec::MinDistance {
                minimum,
                band,
                unit,
            } => {
                raw.threshold = Some(minimum);
                raw.band = Some(band);
                raw.unit = Some(unit);
            }
            MetricSpec::Range {
                lower,
                upper,
                band,
                unit,
            } => {
                raw.lower = Some(lower);
                raw.upper = Some(upper);
                raw.band = Some(band);
                raw.unit = Some(unit);
            }
            MetricSpec::VarianceBound { bound, unit } => {
                raw.threshold = Some(bound);
                raw.unit = Some(unit);
            }
            MetricSpec::ValidityFlag => raw.unit = Some(Unit::flag()),
        }
        raw
    }
}

impl MetricSpec {
    pub fn kind(&self) -> MetricKind {
        match self {
            MetricSpec::MaxLimit { .. } => MetricKind::MaxLimit,
            MetricSpec::MaxOvershoot { .. } => MetricKind::MaxOvershoot,
            MetricSpec::SteadyStateOffset { .. } => MetricKind::SteadyStateOffset,
            MetricSpec::Overshoot { .. } => MetricKind::Overshoot,
            MetricSpec::MinDistance { .. } => MetricKind::MinDistance,
            MetricSpec::Range { .. } => MetricKind::Range,
            MetricSpec::VarianceBound { .. } => MetricKind::VarianceBound,
            MetricSpec::ValidityFlag => MetricKind::ValidityFlag,
        }
    }

    pub fn unit(&self) -> Unit {
        match self {
            MetricSpec::MaxLimit { unit, .. }
            | MetricSpec::MaxOvershoot { unit, .. }
            | MetricSpec::SteadyStateOffset { unit, .. }
            | MetricSpec::Overshoot { unit, .. }
            | MetricSpec::MinDistance { unit, .. }
            | MetricSpec::Range { unit, .. }
            | MetricSpec::VarianceBound { unit, .. } => unit.clone(),
            MetricSpec::ValidityFlag => Unit::flag(),
        }
    }

    /// The primary threshold: the limit, minimum or bound. `None` for ranges
    /// and validity flags.
    pub fn threshold(&self) -> Option<f64> {
        match self {
            MetricSpec::MaxLimit { limit, .. }
            | MetricSpec::MaxOvershoot { limit, .. }
            | MetricSpec::SteadyStateOffset { limit, .. }
            | MetricSpec::Overshoot { limit, .. } => Some(*limit),
            MetricSpec::MinDistance { minimum, .. } => Some(*minimum),
            MetricSpec::VarianceBound { bound, .. } => Some(*bound),
            MetricSpec::Range { .. } | MetricSpec::ValidityFlag => None,
        }
    }

    fn check(&self) -> Result<(), MetricError> {
        let bad = |why: &str| {
            Err(MetricError::InvalidSpec(format!(
                "{:?}: {why}",
                self.kind()
            )))
        };
        let positive = |x: f64| x.is_finite() && x > 0.0;
        match self {
            MetricSpec::MaxLimit { limit, .. }
            | MetricSpec::MaxOvershoot { limit, .. }
            | MetricSpec::SteadyStateOffset { limit, .. }
            | MetricSpec::Overshoot { limit, .. } => {
                if !positive(*limit) {
                    return bad("limit must be finite and positive");
                }
            }
            MetricSpec::MinDistance { minimum, band, .. } => {
                if !minimum.is_finite() {
                    return bad("minimum must be finite");
                }
                if !positive(*band) {
                    return bad("band must be finite and positive");
                }
            }
            MetricSpec::Range {
                lower, upper, band, ..
            } => {
                if !lower.is_finite() || !upper.is_finite() || lower >= upper {
                    return bad("bounds must be finite and ordered");
                }
                if !positive(*band) {
                    return bad("band must be finite and positive");
                }
            }
            MetricSpec::VarianceBound { bound, .. } => {
                if !positive(*bound) {
                    return bad("bound must be finite and positive");
                }
            }
            MetricSpec::ValidityFlag => {}
        }
        Ok(())
    }

    /// Normalizes a raw value (already in this spec's unit).
    fn normalize(&self, m: f64) -> Result<f64, MetricError> {
        let level = match self {
            MetricSpec::MaxLimit { limit, .. }
            | MetricSpec::MaxOvershoot { limit, .. }
            | MetricSpec::SteadyStateOffset { limit, .. }
            | MetricSpec::Overshoot { limit, .. } => 1.0 - m.abs() / limit,
            MetricSpec::MinDistance { minimum, band, .. } => (m - minimum) / band,
            MetricSpec::Range {
                lower, upper, band, ..
            } => {
                let outside = if m < *lower {
                    lower - m
                } else if m > *upper {
                    m - upper
                } else {
                    0.0
                };
                1.0 - outside / band
            }
            MetricSpec::VarianceBound { bound, .. } => {
                if m < 0.0 {
                    return Err(MetricError::NegativeVariance(m));
                }
                1.0 - m / bound
            }
            MetricSpec::ValidityFlag => {
                if m >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        Ok(level.clamp(0.0, 1.0))
    }
}

/// A normalized performance level: 1 is full performance, 0 means the
/// monitored requirement is violated.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PerformanceLevel(f64);

impl PerformanceLevel {
    pub const FULL: PerformanceLevel = PerformanceLevel(1.0);
    pub const ZERO: PerformanceLevel = PerformanceLevel(0.0);

    pub fn new(value: f64) -> Result<Self, MetricError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(MetricError::LevelOutOfRange(value))
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Self(0.0)
        } else {
            Self(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PerformanceLevel {
    type Error = MetricError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<PerformanceLevel> for f64 {
    fn from(l: PerformanceLevel) -> Self {
        l.0
    }
}

impl fmt::Display for PerformanceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationBias {
    Optimistic,
    Pessimistic,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionRule {
    WeightedMean,
    #[default]
    Min,
}

impl CompositionRule {
    /// Combines levels; `weights` must be normalized and as long as `levels`.
    pub fn combine(self, levels: &[f64], weights: &[f64]) -> f64 {
        debug_assert_eq!(levels.len(), weights.len());
        match self {
            CompositionRule::Min => levels.iter().copied().fold(f64::INFINITY, f64::min),
            CompositionRule::WeightedMean => {
                let sum: f64 = levels.iter().zip(weights).map(|(l, w)| l * w).sum();
                sum.clamp(0.0, 1.0)
            }
        }
    }

    /// Combines with equal weights.
    pub fn combine_equal(self, levels: &[f64]) -> f64 {
        match self {
            CompositionRule::Min => levels.iter().copied().fold(f64::INFINITY, f64::min),
            CompositionRule::WeightedMean => {
                let sum: f64 = levels.iter().sum();
                (sum / levels.len() as f64).clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMetric {
    pub id: String,
    pub spec: MetricSpec,
    pub weight: f64,
    pub bias: EstimationBias,
    pub grace_cycles: u32,
}

impl AtomicMetric {
    pub fn new(id: impl Into<String>, spec: MetricSpec) -> Self {
        Self {
            id: id.into(),
            spec,
            weight: 1.0,
            bias: EstimationBias::Unknown,
            grace_cycles: DEFAULT_GRACE_CYCLES,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self, MetricError> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(MetricError::InvalidWeight {
                metric: self.id,
                weight,
            });
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn with_bias(mut self, bias: EstimationBias) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_grace_cycles(mut self, cycles: u32) -> Self {
        self.grace_cycles = cycles;
        self
    }

    pub fn evaluate(&self, measurement: &Quantity) -> Result<PerformanceLevel, MetricError> {
        evaluate_atomic(self, measurement)
    }
}

pub fn evaluate_atomic(
    metric: &AtomicMetric,
    measurement: &Quantity,
) -> Result<PerformanceLevel, MetricError> {
    let expected = metric.spec.unit();
    if measurement.unit != expected {
        return Err(MetricError::UnitMismatch {
            metric: metric.id.clone(),
            expected,
            found: measurement.unit.clone(),
        });
    }
    if !measurement.value.is_finite() {
        return Err(MetricError::NonFiniteMeasurement {
            metric: metric.id.clone(),
        });
    }
    metric
        .spec
        .normalize(measurement.value)
        .map(PerformanceLevel)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedMetric {
    pub id: String,
    pub children: Vec<String>,
    /// Normalized to sum to one.
    pub weights: Vec<f64>,
    pub rule: CompositionRule,
    pub history: BTreeSet<String>,
    pub allow_shared: BTreeSet<String>,
    pub bias: EstimationBias,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Atomic(AtomicMetric),
    Composed(ComposedMetric),
}

impl Metric {
    pub fn id(&self) -> &str {
        match self {
            Metric::Atomic(a) => &a.id,
            Metric::Composed(c) => &c.id,
        }
    }

    pub fn bias(&self) -> EstimationBias {
        match self {
            Metric::Atomic(a) => a.bias,
            Metric::Composed(c) => c.bias,
        }
    }

    /// Default weight when used as a child without an explicit weight.
    pub fn weight(&self) -> f64 {
        match self {
            Metric::Atomic(a) => a.weight,
            Metric::Composed(_) => 1.0,
        }
    }

    pub fn history(&self) -> BTreeSet<String> {
        history(self)
    }
}

impl From<AtomicMetric> for Metric {
    fn from(a: AtomicMetric) -> Self {
        Metric::Atomic(a)
    }
}

impl From<ComposedMetric> for Metric {
    fn from(c: ComposedMetric) -> Self {
        Metric::Composed(c)
    }
}

/// Atomic metric ids a metric was built from.
pub fn history(metric: &Metric) -> BTreeSet<String> {
    match metric {
        Metric::Atomic(a) => BTreeSet::from([a.id.clone()]),
        Metric::Composed(c) => c.history.clone(),
    }
}

pub fn compose(
    id: impl Into<String>,
    children: &[&Metric],
    weights: &[f64],
    rule: CompositionRule,
) -> Result<ComposedMetric, MetricError> {
    compose_with_shared(id, children, weights, rule, &[])
}

/// Like [`compose`], but children may share the atomic metrics named in
/// `allow_shared`.
pub fn compose_with_shared(
    id: impl Into<String>,
    children: &[&Metric],
    weights: &[f64],
    rule: CompositionRule,
    allow_shared: &[&str],
) -> Result<ComposedMetric, MetricError> {
    let id = id.into();
    if children.is_empty() {
        return Err(MetricError::EmptyChildren(id));
    }
    if weights.len() != children.len() {
        return Err(MetricError::WeightCountMismatch {
            metric: id,
            children: children.len(),
            weights: weights.len(),
        });
    }
    if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(MetricError::NonPositiveWeight {
            metric: id,
            weight: w,
        });
    }

    let allow: BTreeSet<String> = allow_shared.iter().map(|s| s.to_string()).collect();
    let histories: Vec<BTreeSet<String>> = children.iter().map(|c| c.history()).collect();
    let mut shared = BTreeSet::new();
    for (i, a) in histories.iter().enumerate() {
        for b in &histories[i + 1..] {
            shared.extend(a.intersection(b).filter(|x| !allow.contains(*x)).cloned());
        }
    }
    if !shared.is_empty() {
        return Err(MetricError::CorrelatedComposition {
            metric: id,
            shared: shared.into_iter().collect(),
        });
    }

    let total: f64 = weights.iter().sum();
    let bias = if children
        .iter()
        .all(|c| c.bias() == EstimationBias::Pessimistic)
    {
        EstimationBias::Pessimistic
    } else {
        EstimationBias::Unknown
    };
    Ok(ComposedMetric {
        id,
        children: children.iter().map(|c| c.id().to_string()).collect(),
        weights: weights.iter().map(|w| w / total).collect(),
        rule,
        history: histories.into_iter().flatten().collect(),
        allow_shared: allow,
        bias,
    })
}

pub fn evaluate_composed(
    metric: &ComposedMetric,
    child_levels: &BTreeMap<String, PerformanceLevel>,
) -> Result<PerformanceLevel, MetricError> {
    let levels = metric
        .children
        .iter()
        .map(|c| {
            child_levels
                .get(c)
                .map(|l| l.value())
                .ok_or_else(|| MetricError::MissingChildLevel {
                    metric: metric.id.clone(),
                    child: c.clone(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PerformanceLevel::saturating(
        metric.rule.combine(&levels, &metric.weights),
    ))
}

/// One atomic entry of a metric file. Either `spec` or `requirement` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicDef {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<MetricSpec>,
    /// Derive the spec from this requirement's template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement: Option<String>,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub bias: EstimationBias,
    #[serde(default = "default_grace")]
    pub grace_cycles: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposedDef {
    pub id: String,
    pub children: Vec<String>,
    /// Defaults to each child's own weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub rule: CompositionRule,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allow_shared: Vec<String>,
}

fn one() -> f64 {
    1.0
}

fn default_grace() -> u32 {
    DEFAULT_GRACE_CYCLES
}

/// The metric definition file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricDocument {
    pub atomics: Vec<AtomicDef>,
    #[serde(default)]
    pub composed: Vec<ComposedDef>,
}

impl MetricDocument {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Resolved metric definitions indexed by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricCatalog {
    metrics: BTreeMap<String, Metric>,
}

impl MetricCatalog {
    pub fn from_document(
        doc: &MetricDocument,
        requirements: Option<&RequirementSet>,
    ) -> Result<Self, MetricError> {
        let mut catalog = MetricCatalog::default();
        for def in &doc.atomics {
            let spec = match (&def.spec, &def.requirement) {
                (Some(spec), None) => spec.clone(),
                (None, Some(req_id)) => {
                    let req = requirements
                        .and_then(|r| r.requirement(req_id))
                        .ok_or_else(|| MetricError::UnknownRequirement {
                            metric: def.id.clone(),
                            requirement: req_id.clone(),
                        })?;
                    derive_metric_template(req)
                }
                _ => {
                    return Err(MetricError::InvalidSpec(format!(
                        "atomic `{}` needs exactly one of `spec` or `requirement`",
                        def.id
                    )))
                }
            };
            let atom = AtomicMetric::new(def.id.clone(), spec)
                .with_weight(def.weight)?
                .with_bias(def.bias)
                .with_grace_cycles(def.grace_cycles);
            catalog.insert(Metric::Atomic(atom))?;
        }

        // Composed entries may reference each other in any order.
        let mut pending: Vec<&ComposedDef> = doc.composed.iter().collect();
        while !pending.is_empty() {
            let before = pending.len();
            let mut rest = Vec::new();
            for def in pending {
                if def.children.iter().all(|c| catalog.metrics.contains_key(c)) {
                    let children: Vec<&Metric> =
                        def.children.iter().map(|c| &catalog.metrics[c]).collect();
                    let weights = def
                        .weights
                        .clone()
                        .unwrap_or_else(|| children.iter().map(|c| c.weight()).collect());
                    let shared: Vec<&str> = def.allow_shared.iter().map(String::as_str).collect();
                    let composed = compose_with_shared(
                        def.id.clone(),
                        &children,
                        &weights,
                        def.rule,
                        &shared,
                    )?;
                    catalog.insert(Metric::Composed(composed))?;
                } else {
                    rest.push(def);
                }
            }
            if rest.len() == before {
                let def = rest[0];
                let missing = def
                    .children
                    .iter()
                    .find(|c| !catalog.metrics.contains_key(*c))
                    .cloned()
                    .unwrap_or_default();
                return Err(MetricError::UnknownMetric(missing));
            }
            pending = rest;
        }
        Ok(catalog)
    }

    pub fn insert(&mut self, metric: Metric) -> Result<(), MetricError> {
        let id = metric.id().to_string();
        if self.metrics.contains_key(&id) {
            return Err(MetricError::DuplicateMetric(id));
        }
        self.metrics.insert(id, metric);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Metric> {
        self.metrics.get(id)
    }

    pub fn atomic(&self, id: &str) -> Option<&AtomicMetric> {
        match self.metrics.get(id) {
            Some(Metric::Atomic(a)) => Some(a),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Metric> {
        self.metrics.values()
    }

    /// Evaluates metric `id`, asking `atom_level` for the level of each atom.
    pub fn evaluate_with(
        &self,
        id: &str,
        atom_level: &mut dyn FnMut(&AtomicMetric) -> PerformanceLevel,
    ) -> Result<PerformanceLevel, MetricError> {
        match self.metrics.get(id) {
            None => Err(MetricError::UnknownMetric(id.to_string())),
            Some(Metric::Atomic(a)) => Ok(atom_level(a)),
            Some(Metric::Composed(c)) => {
                let mut levels = BTreeMap::new();
                for child in &c.children {
                    levels.insert(child.clone(), self.evaluate_with(child, atom_level)?);
                }
                evaluate_composed(c, &levels)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("metric `{metric}` expects unit `{expected}`, got `{found}`")]
    UnitMismatch {
        metric: String,
        expected: Unit,
        found: Unit,
    },
    #[error("negative variance {0}")]
    NegativeVariance(f64),
    #[error("metric `{metric}` received a non-finite measurement")]
    NonFiniteMeasurement { metric: String },
    #[error("composition `{metric}` fuses correlated metrics sharing [{}]", .shared.join(", "))]
    CorrelatedComposition { metric: String, shared: Vec<String> },
    #[error("composition `{0}` has no children")]
    EmptyChildren(String),
    #[error("composition `{metric}` has non-positive weight {weight}")]
    NonPositiveWeight { metric: String, weight: f64 },
    #[error("composition `{metric}` has {children} children but {weights} weights")]
    WeightCountMismatch {
        metric: String,
        children: usize,
        weights: usize,
    },
    #[error("metric `{metric}` weight {weight} is outside (0, 1]")]
    InvalidWeight { metric: String, weight: f64 },
    #[error("composition `{metric}` is missing a level for child `{child}`")]
    MissingChildLevel { metric: String, child: String },
    #[error("performance level {0} outside [0, 1]")]
    LevelOutOfRange(f64),
    #[error("invalid metric spec: {0}")]
    InvalidSpec(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("duplicate metric id `{0}`")]
    DuplicateMetric(String),
    #[error("metric `{metric}` references unknown requirement `{requirement}`")]
    UnknownRequirement { metric: String, requirement: String },
}
