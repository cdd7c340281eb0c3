//! Scenario files and the time-varying fault schedule.
//!
//! File references inside a scenario are resolved relative to the scenario
//! file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::control::PdGains;
use super::plant::PlantParams;
use super::SimError;
use crate::ability::{AbilityBinding, AbilityGraph, BindingDocument, MonitorThresholds};
use crate::graph::SkillGraph;
use crate::metrics::{MetricCatalog, MetricDocument};
use crate::modes::{DegradedPolicy, OperatingMode};
use crate::requirements::RequirementSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultConfig {
    /// Standard deviation of the distance estimate, m.
    pub noise_sigma: f64,
    pub marking_dropout: bool,
    /// Factor on the reported variance; below 1 is optimistic, above 1 pessimistic.
    pub variance_scale: f64,
    pub controller_gain_scale: f64,
    /// Lateral drift added to the plant, m/s.
    pub disturbance_lateral: f64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            marking_dropout: false,
            variance_scale: 1.0,
            controller_gain_scale: 1.0,
            disturbance_lateral: 0.0,
        }
    }
}

impl FaultConfig {
    fn check(&self) -> Result<(), String> {
        let scales = [
            ("noise_sigma", self.noise_sigma),
            ("variance_scale", self.variance_scale),
            ("controller_gain_scale", self.controller_gain_scale),
        ];
        for (name, value) in scales {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(format!("{name} must be finite and >= 0, got {value}"));
            }
        }
        if !self.disturbance_lateral.is_finite() {
            return Err("disturbance_lateral must be finite".into());
        }
        Ok(())
    }
}

/// Overrides active on `[from, until)`; later segments win.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSegment {
    pub from: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marking_dropout: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller_gain_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance_lateral: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSchedule {
    #[serde(default)]
    pub base: FaultConfig,
    #[serde(default)]
    pub segments: Vec<FaultSegment>,
}

/// Tolerance for comparing step times against segment boundaries.
pub(crate) const TIME_EPS: f64 = 1e-9;

impl FaultSchedule {
    pub fn at(&self, t: f64) -> FaultConfig {
        let mut f = self.base;
        for seg in &self.segments {
            let started = t + TIME_EPS >= seg.from;
            let ended = seg.until.is_some_and(|u| t + TIME_EPS >= u);
            if started && !ended {
                if let Some(x) = seg.noise_sigma {
                    f.noise_sigma = x;
                }
                if let Some(x) = seg.marking_dropout {
                    f.marking_dropout = x;
                }
                if let Some(x) = seg.variance_scale {
                    f.variance_scale = x;
                }
                if let Some(x) = seg.controller_gain_scale {
                    f.controller_gain_scale = x;
                }
                if let Some(x) = seg.disturbance_lateral {
                    f.disturbance_lateral = x;
                }
            }
        }
        f
    }

    fn check(&self) -> Result<(), String> {
        self.base.check()?;
        for seg in &self.segments {
            if !seg.from.is_finite() || seg.until.is_some_and(|u| !(u > seg.from)) {
                return Err(format!(
                    "fault segment starting at {} has an empty or invalid interval",
                    seg.from
                ));
            }
            self.at(seg.from).check()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneGeometry {
    /// Half the distance between the markings bounding the hard shoulder, m.
    pub half_width: f64,
    /// Half the vehicle width, m.
    pub vehicle_half_width: f64,
}

impl LaneGeometry {
    /// Distance from the vehicle's left side to the left marking at offset `y`.
    pub fn distance_to_left(&self, y: f64) -> f64 {
        self.half_width - self.vehicle_half_width - y
    }

    pub fn offset_for_distance(&self, d: f64) -> f64 {
        self.half_width - self.vehicle_half_width - d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFiles {
    pub graph: String,
    pub requirements: String,
    pub bindings: String,
    pub metrics: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub lane: LaneGeometry,
    pub target_distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_distance: Option<f64>,
    /// Commanded speed in Follow Mode, m/s.
    pub speed: f64,
    #[serde(default)]
    pub controller: PdGains,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub thresholds: MonitorThresholds,
    #[serde(default)]
    pub degraded_policy: DegradedPolicy,
    /// Number of valid distance samples averaged for the steady-state offset.
    #[serde(default = "default_offset_window")]
    pub offset_window: usize,
    pub files: ScenarioFiles,
    #[serde(default)]
    pub signals: SignalMap,
    #[serde(default = "default_requests")]
    pub operator_requests: Vec<OperatorRequest>,
    #[serde(default)]
    pub faults: FaultSchedule,
}

/// Metric and component a simulated signal is reported under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalRoute {
    pub metric: String,
    pub component: String,
}

impl SignalRoute {
    fn new(metric: &str, component: &str) -> Option<Self> {
        Some(Self {
            metric: metric.into(),
            component: component.into(),
        })
    }
}

/// Routing of the five simulated signals; a missing route is not reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalMap {
    pub distance: Option<SignalRoute>,
    pub variance: Option<SignalRoute>,
    pub validity: Option<SignalRoute>,
    pub offset: Option<SignalRoute>,
    pub steering: Option<SignalRoute>,
}

impl Default for SignalMap {
    fn default() -> Self {
        Self {
            distance: SignalRoute::new("lane_distance", "afa_logic"),
            variance: SignalRoute::new("pose_variance", "lane_estimator"),
            validity: SignalRoute::new("marking_validity", "lane_detector"),
            offset: SignalRoute::new("lateral_offset", "lateral_controller"),
            steering: SignalRoute::new("steering_angle", "steering_ecu"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorRequest {
    pub t: f64,
    pub target: OperatingMode,
}

fn default_requests() -> Vec<OperatorRequest> {
    vec![
        OperatorRequest {
            t: 0.0,
            target: OperatingMode::SafeHalt,
        },
        OperatorRequest {
            t: 0.0,
            target: OperatingMode::Follow,
        },
    ]
}

fn default_offset_window() -> usize {
    10
}

impl Scenario {
    pub fn steps(&self) -> usize {
        (self.duration / self.dt + TIME_EPS).floor() as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.duration + TIME_EPS >= self.dt && self.duration.is_finite()) {
            return Err(format!(
                "duration {} is shorter than dt {}",
                self.duration, self.dt
            ));
        }
        if !(self.speed >= 0.0 && self.speed <= self.plant.max_speed() + TIME_EPS) {
            return Err(format!(
                "speed {} m/s outside [0, {}]",
                self.speed,
                self.plant.max_speed()
            ));
        }
        if !(self.plant.wheelbase > 0.0
            && self.plant.steer_limit_deg > 0.0
            && self.plant.safe_halt_decel > 0.0)
        {
            return Err("plant parameters must be positive".into());
        }
        if !(self.target_distance.is_finite() && self.initial_distance.is_none_or(f64::is_finite)) {
            return Err("distances must be finite".into());
        }
        if self.offset_window == 0 {
            return Err("offset_window must be at least 1".into());
        }
        self.faults.check()
    }
}

/// A scenario with every referenced document parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub graph: SkillGraph,
    pub requirements: RequirementSet,
    pub bindings: BTreeMap<String, AbilityBinding>,
    pub metrics: MetricDocument,
}

impl LoadedScenario {
    /// Instantiates the ability graph, reporting problems as `InvalidScenario`.
    pub fn build_ability_graph(&self) -> Result<AbilityGraph, SimError> {
        let invalid = |m: String| SimError::InvalidScenario(m);
        self.scenario.validate().map_err(invalid)?;
        self.requirements
            .check()
            .map_err(|e| invalid(format!("requirements: {e}")))?;
        let catalog = MetricCatalog::from_document(&self.metrics, Some(&self.requirements))
            .map_err(|e| invalid(format!("metrics: {e}")))?;
        AbilityGraph::instantiate(&self.graph, &self.bindings, catalog)
            .map_err(|e| invalid(format!("bindings: {e}")))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, SimError> {
    let text = fs::read_to_string(path).map_err(|e| SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| SimError::Config {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.parent().unwrap_or(Path::new(".")).join(rel)
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, SimError> {
    let scenario: Scenario = read_json(path)?;
    scenario.validate().map_err(|m| SimError::Invalid {
        path: path.display().to_string(),
        message: m,
    })?;
    let graph: SkillGraph = read_json(&resolve(path, &scenario.files.graph))?;
    let requirements: RequirementSet = read_json(&resolve(path, &scenario.files.requirements))?;
    let bindings: BindingDocument = read_json(&resolve(path, &scenario.files.bindings))?;
    let metrics: MetricDocument = read_json(&resolve(path, &scenario.files.metrics))?;
    let loaded = LoadedScenario {
        scenario,
        graph,
        requirements,
        bindings: bindings.bindings,
        metrics,
    };
    loaded
        .build_ability_graph()
        .map_err(|e| SimError::Invalid {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    Ok(loaded)
}

/// Directory holding the shipped scenarios.
pub fn shipped_scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join("scenarios")
}

pub fn shipped_scenario(name: &str) -> Result<LoadedScenario, SimError> {
    load_scenario(&shipped_scenario_dir().join(format!("{name}.json")))
}
