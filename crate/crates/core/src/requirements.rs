//! Safety goals, the requirements derived from them, and ASIL determination.
//!
//! The ASIL determination table is shipped as data (`data/asil_table.json`)
//! so it can be audited line by line against the standard. Requirements are
//! annotated on skill-graph edges by id and turned into metric templates for
//! runtime monitoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::SkillGraph;
use crate::metrics::MetricSpec;
use crate::quantity::Unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Asil {
    QM,
    A,
    B,
    C,
    D,
}

impl fmt::Display for Asil {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Asil::QM => "QM",
            Asil::A => "A",
            Asil::B => "B",
            Asil::C => "C",
            Asil::D => "D",
        };
        f.write_str(s)
    }
}

macro_rules! level_enum {
    ($name:ident, $prefix:literal, [$($variant:ident = $n:literal),+]) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn level(self) -> u8 {
                match self {
                    $($name::$variant => $n),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.level())
            }
        }

        impl FromStr for $name {
            type Err = RequirementError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_uppercase().as_str() {
                    $(x if x == concat!($prefix, $n) => Ok($name::$variant),)+
                    _ => Err(RequirementError::UnknownClass(s.to_string())),
                }
            }
        }
    };
}

level_enum!(Severity, "S", [S0 = 0, S1 = 1, S2 = 2, S3 = 3]);
level_enum!(Exposure, "E", [E0 = 0, E1 = 1, E2 = 2, E3 = 3, E4 = 4]);
level_enum!(Controllability, "C", [C0 = 0, C1 = 1, C2 = 2, C3 = 3]);

/// Severity, exposure and controllability of a hazardous event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecTriple {
    pub severity: Severity,
    pub exposure: Exposure,
    pub controllability: Controllability,
}

impl SecTriple {
    pub fn new(severity: Severity, exposure: Exposure, controllability: Controllability) -> Self {
        Self {
            severity,
            exposure,
            controllability,
        }
    }

    /// All 80 classifiable triples, severity-major.
    pub fn all() -> impl Iterator<Item = SecTriple> {
        Severity::ALL.iter().flat_map(|&s| {
            Exposure::ALL.iter().flat_map(move |&e| {
                Controllability::ALL
                    .iter()
                    .map(move |&c| SecTriple::new(s, e, c))
            })
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AsilRow {
    severity: Severity,
    exposure: Exposure,
    controllability: Controllability,
    asil: Asil,
}

/// A complete ASIL determination table indexed by (S, E, C).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsilTable {
    cells: [[[Asil; 4]; 5]; 4],
}

impl AsilTable {
    /// Parses a fixture of `{severity, exposure, controllability, asil}` rows.
    /// Every triple must appear exactly once.
    pub fn from_json(text: &str) -> Result<Self, RequirementError> {
        let rows: Vec<AsilRow> =
            serde_json::from_str(text).map_err(|e| RequirementError::Fixture(e.to_string()))?;
        let mut cells: [[[Option<Asil>; 4]; 5]; 4] = [[[None; 4]; 5]; 4];
        for row in rows {
            let cell = &mut cells[row.severity.level() as usize][row.exposure.level() as usize]
                [row.controllability.level() as usize];
            if cell.replace(row.asil).is_some() {
                return Err(RequirementError::Fixture(format!(
                    "triple ({}, {}, {}) listed twice",
                    row.severity, row.exposure, row.controllability
                )));
            }
        }
        let mut out = [[[Asil::QM; 4]; 5]; 4];
        for sec in SecTriple::all() {
            let (s, e, c) = (
                sec.severity.level() as usize,
                sec.exposure.level() as usize,
                sec.controllability.level() as usize,
            );
            out[s][e][c] = cells[s][e][c].ok_or_else(|| {
                RequirementError::Fixture(format!(
                    "triple ({}, {}, {}) missing",
                    sec.severity, sec.exposure, sec.controllability
                ))
            })?;
        }
        Ok(Self { cells: out })
    }

    pub fn classify(&self, sec: SecTriple) -> Asil {
        self.cells[sec.severity.level() as usize][sec.exposure.level() as usize]
            [sec.controllability.level() as usize]
    }
}

static SHIPPED_TABLE: LazyLock<AsilTable> = LazyLock::new(|| {
    AsilTable::from_json(include_str!("../data/asil_table.json")).expect("shipped ASIL fixture")
});

/// Classifies a hazardous event with the shipped ISO 26262-3 table.
pub fn asil_classify(sec: SecTriple) -> Asil {
    SHIPPED_TABLE.classify(sec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyGoal {
    pub id: String,
    pub text: String,
    pub asil: Asil,
    pub hazardous_event: String,
    /// Classification of the hazardous event, when recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<SecTriple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementKind {
    MaxLimit,
    MinDistance,
    MaxOvershoot,
    Range,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    MaxLimit { value: f64, unit: Unit },
    MinDistance { value: f64, unit: Unit },
    MaxOvershoot { value: f64, unit: Unit },
    Range { lower: f64, upper: f64, unit: Unit },
}

impl Constraint {
    pub fn kind(&self) -> RequirementKind {
        match self {
            Constraint::MaxLimit { .. } => RequirementKind::MaxLimit,
            Constraint::MinDistance { .. } => RequirementKind::MinDistance,
            Constraint::MaxOvershoot { .. } => RequirementKind::MaxOvershoot,
            Constraint::Range { .. } => RequirementKind::Range,
        }
    }

    pub fn unit(&self) -> &Unit {
        match self {
            Constraint::MaxLimit { unit, .. }
            | Constraint::MinDistance { unit, .. }
            | Constraint::MaxOvershoot { unit, .. }
            | Constraint::Range { unit, .. } => unit,
        }
    }
}

/// A testable constraint on one quantity, traced to a safety goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRequirement", into = "RawRequirement")]
pub struct Requirement {
    pub id: String,
    pub goal: String,
    pub subject: String,
    pub constraint: Constraint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequirement {
    id: String,
    goal: String,
    kind: RequirementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
    unit: String,
    subject: String,
}

impl TryFrom<RawRequirement> for Requirement {
    type Error = RequirementError;

    fn try_from(raw: RawRequirement) -> Result<Self, Self::Error> {
        let bad = |why: &str| RequirementError::InvalidThreshold {
            id: raw.id.clone(),
            reason: why.to_string(),
        };
        let unit = Unit::new(raw.unit.clone()).map_err(|_| bad("unit is empty"))?;
        let constraint = match raw.kind {
            RequirementKind::Range => {
                if raw.threshold.is_some() {
                    return Err(bad("range takes `lower` and `upper`, not `threshold`"));
                }
                let (Some(lower), Some(upper)) = (raw.lower, raw.upper) else {
                    return Err(bad("range needs `lower` and `upper`"));
                };
                Constraint::Range { lower, upper, unit }
            }
            kind => {
                if raw.lower.is_some() || raw.upper.is_some() {
                    return Err(bad("only range requirements take bounds"));
                }
                let value = raw.threshold.ok_or_else(|| bad("missing `threshold`"))?;
                match kind {
                    RequirementKind::MaxLimit => Constraint::MaxLimit { value, unit },
                    RequirementKind::MinDistance => Constraint::MinDistance { value, unit },
                    RequirementKind::MaxOvershoot => Constraint::MaxOvershoot { value, unit },
                    RequirementKind::Range => unreachable!(),
                }
            }
        };
        Requirement::new(raw.id, raw.goal, raw.subject, constraint)
    }
}

impl From<Requirement> for RawRequirement {
    fn from(r: Requirement) -> Self {
        let kind = r.kind();
        let (threshold, lower, upper, unit) = match r.constraint {
            Constraint::MaxLimit { value, unit }
            | Constraint::MinDistance { value, unit }
            | Constraint::MaxOvershoot { value, unit } => (Some(value), None, None, unit),
            Constraint::Range { lower, upper, unit } => (None, Some(lower), Some(upper), unit),
        };
        RawRequirement {
            id: r.id,
            goal: r.goal,
            kind,
            threshold,
            lower,
            upper,
            unit: unit.into(),
            subject: r.subject,
        }
    }
}

impl Requirement {
    /// Checks finiteness and, for ranges, `lower < upper`.
    pub fn new(
        id: impl Into<String>,
        goal: impl Into<String>,
        subject: impl Into<String>,
        constraint: Constraint,
    ) -> Result<Self, RequirementError> {
        let id = id.into();
        let bad = |why: &str| RequirementError::InvalidThreshold {
            id: id.clone(),
            reason: why.to_string(),
        };
        match &constraint {
            Constraint::MaxLimit { value, .. }
            | Constraint::MinDistance { value, .. }
            | Constraint::MaxOvershoot { value, .. } => {
                if !value.is_finite() {
                    return Err(bad("threshold is not finite"));
                }
            }
            Constraint::Range { lower, upper, .. } => {
                if !lower.is_finite() || !upper.is_finite() {
                    return Err(bad("bounds are not finite"));
                }
                if lower >= upper {
                    return Err(bad("lower bound must be below upper bound"));
                }
            }
        }
        Ok(Self {
            id,
            goal: goal.into(),
            subject: subject.into(),
            constraint,
        })
    }

    pub fn kind(&self) -> RequirementKind {
        self.constraint.kind()
    }

    pub fn unit(&self) -> &Unit {
        self.constraint.unit()
    }
}

/// Turns a requirement into the spec of the atomic metric that monitors it.
///
/// Thresholds and units are carried over unchanged. A minimum distance gets
/// a margin band equal to its threshold; a range gets a band equal to its
/// width.
pub fn derive_metric_template(req: &Requirement) -> MetricSpec {
    match &req.constraint {
        Constraint::MaxLimit { value, unit } => MetricSpec::MaxLimit {
            limit: *value,
            unit: unit.clone(),
        },
        Constraint::MaxOvershoot { value, unit } => MetricSpec::MaxOvershoot {
            limit: *value,
            unit: unit.clone(),
        },
        Constraint::MinDistance { value, unit } => MetricSpec::MinDistance {
            minimum: *value,
            band: *value,
            unit: unit.clone(),
        },
        Constraint::Range { lower, upper, unit } => MetricSpec::Range {
            lower: *lower,
            upper: *upper,
            band: upper - lower,
            unit: unit.clone(),
        },
    }
}

/// Operating limits that constrain the whole use case rather than one skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingLimits {
    pub max_speed_kmh: f64,
    /// Following distance to the leading vehicle, `[min, max]` in metres.
    pub following_distance_m: [f64; 2],
}

impl OperatingLimits {
    pub fn max_speed_mps(&self) -> f64 {
        self.max_speed_kmh / 3.6
    }
}

/// The requirement file: goals, requirements and optional operating limits.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementSet {
    pub goals: Vec<SafetyGoal>,
    pub requirements: Vec<Requirement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_limits: Option<OperatingLimits>,
}

impl RequirementSet {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn goal(&self, id: &str) -> Option<&SafetyGoal> {
        self.goals.iter().find(|g| g.id == id)
    }

    pub fn requirement(&self, id: &str) -> Option<&Requirement> {
        self.requirements.iter().find(|r| r.id == id)
    }

    /// Cross-checks ids, goal references and recorded classifications.
    pub fn check(&self) -> Result<(), RequirementError> {
        let mut ids = BTreeSet::new();
        for g in &self.goals {
            if !ids.insert(g.id.as_str()) {
                return Err(RequirementError::DuplicateId(g.id.clone()));
            }
            if let Some(sec) = g.classification {
                let derived = asil_classify(sec);
                if derived != g.asil {
                    return Err(RequirementError::AsilMismatch {
                        goal: g.id.clone(),
                        stated: g.asil,
                        derived,
                    });
                }
            }
        }
        let mut req_ids = BTreeSet::new();
        for r in &self.requirements {
            if !req_ids.insert(r.id.as_str()) {
                return Err(RequirementError::DuplicateId(r.id.clone()));
            }
            if self.goal(&r.goal).is_none() {
                return Err(RequirementError::UnknownGoal {
                    requirement: r.id.clone(),
                    goal: r.goal.clone(),
                });
            }
        }
        Ok(())
    }

    /// Requirement ids per annotated edge that do not resolve in this set.
    pub fn unresolved_in(&self, graph: &SkillGraph) -> BTreeMap<(String, String), Vec<String>> {
        let mut out = BTreeMap::new();
        for e in &graph.edges {
            let missing: Vec<String> = e
                .requirements
                .iter()
                .filter(|id| self.requirement(id).is_none())
                .cloned()
                .collect();
            if !missing.is_empty() {
                out.insert((e.from.clone(), e.to.clone()), missing);
            }
        }
        out
    }
}

/// The shipped Follow-Mode goals, requirements and operating limits.
pub fn afas_goals() -> RequirementSet {
    RequirementSet::from_json(include_str!("../data/afas_goals.json")).expect("shipped goals parse")
}

impl SkillGraph {
    /// Annotates the edge `from -> to` with `req`.
    pub fn attach_requirement(
        &mut self,
        from: &str,
        to: &str,
        req: &Requirement,
    ) -> Result<(), RequirementError> {
        let edge = self
            .edge_mut(from, to)
            .ok_or_else(|| RequirementError::UnknownEdge {
                from: from.to_string(),
                to: to.to_string(),
            })?;
        if edge.requirements.iter().any(|r| *r == req.id) {
            return Err(RequirementError::DuplicateRequirementOnEdge {
                requirement: req.id.clone(),
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        edge.requirements.push(req.id.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RequirementError {
    #[error("no edge {from} -> {to}")]
    UnknownEdge { from: String, to: String },
    #[error("requirement `{requirement}` already annotated on {from} -> {to}")]
    DuplicateRequirementOnEdge {
        requirement: String,
        from: String,
        to: String,
    },
    #[error("requirement `{id}`: {reason}")]
    InvalidThreshold { id: String, reason: String },
    #[error("requirement `{requirement}` references unknown goal `{goal}`")]
    UnknownGoal { requirement: String, goal: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("goal `{goal}` states ASIL {stated} but its classification yields ASIL {derived}")]
    AsilMismatch {
        goal: String,
        stated: Asil,
        derived: Asil,
    },
    #[error("unknown classification `{0}`")]
    UnknownClass(String),
    #[error("ASIL fixture: {0}")]
    Fixture(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::follow_mode_example;
    use crate::metrics::MetricKind;

    fn min_distance() -> Requirement {
        Requirement::new(
            "fsr_lane_distance",
            "sg2",
            "distance to left lane marking",
            Constraint::MinDistance {
                value: 0.28,
                unit: Unit::new("m").unwrap(),
            },
        )
        .unwrap()
    }

    fn overshoot() -> Requirement {
        Requirement::new(
            "tsr_lateral_overshoot",
            "sg2",
            "lateral control overshoot",
            Constraint::MaxOvershoot {
                value: 0.28,
                unit: Unit::new("m").unwrap(),
            },
        )
        .unwrap()
    }

    #[test]
    fn classifications_from_the_use_case() {
        use Controllability::*;
        use Exposure::*;
        use Severity::*;
        assert_eq!(asil_classify(SecTriple::new(S3, E4, C3)), Asil::D);
        assert_eq!(asil_classify(SecTriple::new(S3, E4, C1)), Asil::B);
        assert_eq!(asil_classify(SecTriple::new(S0, E4, C3)), Asil::QM);
        assert_eq!(asil_classify(SecTriple::new(S3, E0, C3)), Asil::QM);
        assert_eq!(asil_classify(SecTriple::new(S3, E4, C0)), Asil::QM);
    }

    #[test]
    fn class_parsing() {
        assert_eq!("S3".parse::<Severity>().unwrap(), Severity::S3);
        assert_eq!("e4".parse::<Exposure>().unwrap(), Exposure::E4);
        assert!("C4".parse::<Controllability>().is_err());
        assert!("X1".parse::<Severity>().is_err());
        assert_eq!(SecTriple::all().count(), 80);
    }

    #[test]
    fn incomplete_fixture_rejected() {
        let text = r#"[{"severity":"S1","exposure":"E1","controllability":"C1","asil":"QM"}]"#;
        assert!(matches!(
            AsilTable::from_json(text),
            Err(RequirementError::Fixture(_))
        ));
    }

    #[test]
    fn attach_to_example_edges() {
        let mut g = follow_mode_example();
        for e in &mut g.edges {
            e.requirements.clear();
        }
        g.attach_requirement("follow_mode", "follow_hard_shoulder", &min_distance())
            .unwrap();
        g.attach_requirement(
            "plan_lateral_guidance",
            "control_lateral_dynamics",
            &overshoot(),
        )
        .unwrap();
        assert_eq!(
            g.edge("follow_mode", "follow_hard_shoulder")
                .unwrap()
                .requirements
                .len(),
            1
        );
        assert_eq!(
            g.edge("plan_lateral_guidance", "control_lateral_dynamics")
                .unwrap()
                .requirements,
            ["tsr_lateral_overshoot"]
        );
        assert!(matches!(
            g.attach_requirement("follow_mode", "follow_hard_shoulder", &min_distance()),
            Err(RequirementError::DuplicateRequirementOnEdge { .. })
        ));
        assert!(matches!(
            g.attach_requirement("camera", "follow_mode", &min_distance()),
            Err(RequirementError::UnknownEdge { .. })
        ));
    }

    #[test]
    fn metric_templates() {
        let spec = derive_metric_template(&min_distance());
        assert_eq!(spec.kind(), MetricKind::MinDistance);
        assert_eq!(spec.threshold(), Some(0.28));
        assert_eq!(spec.unit().as_str(), "m");

        let steer = Requirement::new(
            "fsr_steering_limit",
            "sg1",
            "steering left lock",
            Constraint::MaxLimit {
                value: 3.0,
                unit: Unit::new("deg").unwrap(),
            },
        )
        .unwrap();
        let spec = derive_metric_template(&steer);
        assert_eq!(spec.kind(), MetricKind::MaxLimit);
        assert_eq!(spec.threshold(), Some(3.0));
        assert_eq!(spec.unit().as_str(), "deg");

        let range = Requirement::new(
            "ratio",
            "sg2",
            "variance ratio",
            Constraint::Range {
                lower: 0.0,
                upper: 1.0,
                unit: Unit::new("1").unwrap(),
            },
        )
        .unwrap();
        match derive_metric_template(&range) {
            MetricSpec::Range {
                lower, upper, unit, ..
            } => {
                assert_eq!((lower, upper, unit.as_str()), (0.0, 1.0, "1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_requirements() {
        let m = Unit::new("m").unwrap();
        assert!(Requirement::new(
            "r",
            "g",
            "s",
            Constraint::Range {
                lower: 1.0,
                upper: 1.0,
                unit: m.clone()
            }
        )
        .is_err());
        assert!(Requirement::new(
            "r",
            "g",
            "s",
            Constraint::MaxLimit {
                value: f64::NAN,
                unit: m
            }
        )
        .is_err());
        let text = r#"{"id":"r","goal":"g","kind":"range","threshold":1,"unit":"m","subject":"s"}"#;
        assert!(serde_json::from_str::<Requirement>(text).is_err());
        let text =
            r#"{"id":"r","goal":"g","kind":"max_limit","threshold":1,"unit":"","subject":"s"}"#;
        assert!(serde_json::from_str::<Requirement>(text).is_err());
    }

    #[test]
    fn shipped_goals_are_consistent() {
        let set = afas_goals();
        set.check().unwrap();
        assert_eq!(set.goals.len(), 2);
        assert_eq!(set.goal("sg1").unwrap().asil, Asil::D);
        assert_eq!(set.goal("sg2").unwrap().asil, Asil::B);
        let limits = set.operating_limits.as_ref().unwrap();
        assert_eq!(limits.max_speed_kmh, 10.0);
        assert_eq!(limits.following_distance_m, [80.0, 100.0]);
        assert!(set.unresolved_in(&follow_mode_example()).is_empty());
    }

    #[test]
    fn stated_asil_must_match_classification() {
        let mut set = afas_goals();
        set.goals[0].asil = Asil::A;
        assert!(matches!(
            set.check(),
            Err(RequirementError::AsilMismatch { .. })
        ));
    }
}
