//! Lateral PD controller tracking a target distance to the left marking.

use serde::{Deserialize, Serialize};

use super::perception::PerceptionOutput;
use super::plant::PlantParams;
use super::SimError;

/// `delta = gain_scale * (kp * (distance - target) - kd * angle)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl PdGains {
    /// Gains placing the linearized loop at natural frequency `omega` and
    /// damping `zeta` for speed `v` and wheelbase `l`.
    pub fn from_poles(omega: f64, zeta: f64, v: f64, l: f64) -> Self {
        Self {
            kp: omega * omega * l / (v * v),
            kd: 2.0 * zeta * omega * l / v,
        }
    }
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains::from_poles(0.4, 0.9, 10.0 / 3.6, 4.0)
    }
}

pub fn control_lateral(
    perc: &PerceptionOutput,
    target_distance: f64,
    gain_scale: f64,
    gains: &PdGains,
    plant: &PlantParams,
) -> Result<f64, SimError> {
    let PerceptionOutput::Valid(est) = perc else {
        return Err(SimError::InvalidPerception);
    };
    let raw = gain_scale * (gains.kp * (est.distance - target_distance) - gains.kd * est.angle);
    Ok(plant.clamp_steering(raw))
}
