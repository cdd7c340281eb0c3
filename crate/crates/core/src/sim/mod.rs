//! Desk-scale closed-loop simulation of the protective vehicle in Follow Mode.
//!
//! Each step perceives the lane marking, reports samples to the ability
//! graph, lets the mode machine react to the assessment and only then runs
//! the controller and the plant.

pub mod control;
pub mod perception;
pub mod plant;
mod run;
pub mod scenario;
pub mod trace;

use thiserror::Error;

pub use control::{control_lateral, PdGains};
pub use perception::{perceive, LaneEstimate, PerceptionOutput};
pub use plant::{step_vehicle, PlantParams, VehicleState};
pub use run::{replay, run_scenario, ReplayReport};
pub use scenario::{
    load_scenario, shipped_scenario, FaultConfig, FaultSchedule, LoadedScenario, Scenario,
};
pub use trace::{summarize, RunTrace, StepRecord, TraceSummary};

use crate::ability::RuntimeError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("perception output is invalid")]
    InvalidPerception,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}:{column}: {message}")]
    Config {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}
