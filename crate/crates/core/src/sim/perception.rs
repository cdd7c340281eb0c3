//! Noisy lane-marking perception with a reported variance and a validity flag.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scenario::FaultConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneEstimate {
    /// Distance to the left marking, m.
    pub distance: f64,
    /// Angle to the marking, rad.
    pub angle: f64,
    /// Reported variance of `distance`, m^2.
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerceptionOutput {
    Valid(LaneEstimate),
    Invalid,
}

impl PerceptionOutput {
    pub fn is_valid(&self) -> bool {
        matches!(self, PerceptionOutput::Valid(_))
    }

    pub fn estimate(&self) -> Option<&LaneEstimate> {
        match self {
            PerceptionOutput::Valid(e) => Some(e),
            PerceptionOutput::Invalid => None,
        }
    }
}

/// Two normal draws are made on every call so the random stream does not
/// depend on the fault schedule.
pub fn perceive<R: Rng + ?Sized>(
    true_distance: f64,
    true_angle: f64,
    fault: &FaultConfig,
    wheelbase: f64,
    rng: &mut R,
) -> PerceptionOutput {
    let zd: f64 = rng.sample(StandardNormal);
    let za: f64 = rng.sample(StandardNormal);
    if fault.marking_dropout {
        return PerceptionOutput::Invalid;
    }
    let sigma = fault.noise_sigma;
    PerceptionOutput::Valid(LaneEstimate {
        distance: true_distance + zd * sigma,
        angle: true_angle + za * sigma / wheelbase,
        variance: sigma * sigma * fault.variance_scale,
    })
}
