//! Kinematic single-track plant for the lateral motion of the vehicle.

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantParams {
    /// Wheelbase in metres.
    pub wheelbase: f64,
    pub steer_limit_deg: f64,
    pub max_speed_kmh: f64,
    /// Deceleration used in Safe Halt, m/s^2.
    pub safe_halt_decel: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            wheelbase: 4.0,
            steer_limit_deg: 3.0,
            max_speed_kmh: 10.0,
            safe_halt_decel: 1.0,
        }
    }
}

impl PlantParams {
    pub fn steer_limit(&self) -> f64 {
        self.steer_limit_deg.to_radians()
    }

    pub fn max_speed(&self) -> f64 {
        self.max_speed_kmh / 3.6
    }

    pub fn clamp_steering(&self, delta: f64) -> f64 {
        let lim = self.steer_limit();
        delta.clamp(-lim, lim)
    }
}

/// `y` is the lateral offset from the hard-shoulder centerline, positive
/// towards the left marking; `psi` is the heading error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub s: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    pub delta: f64,
}

pub fn step_vehicle(
    state: &VehicleState,
    delta_cmd: f64,
    disturbance: f64,
    dt: f64,
    params: &PlantParams,
) -> Result<VehicleState, SimError> {
    if !(dt > 0.0) {
        return Err(SimError::NonPositiveDt(dt));
    }
    let delta = params.clamp_steering(delta_cmd);
    let v = state.v.clamp(0.0, params.max_speed());
    let psi = state.psi + (v / params.wheelbase) * delta.tan() * dt;
    Ok(VehicleState {
        s: state.s + v * psi.cos() * dt,
        y: state.y + v * psi.sin() * dt + disturbance * dt,
        psi,
        v,
        delta,
    })
}

/// Speed after one Safe Halt step; exact zero once stopped.
pub fn decelerate(v: f64, decel: f64, dt: f64) -> f64 {
    let next = v - decel * dt;
    if next <= 1e-9 {
        0.0
    } else {
        next
    }
}
