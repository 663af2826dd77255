//! Curvilinear kinematic bicycle, explicit Euler.

use serde::{Deserialize, Serialize};

use super::track::{Scalar, Track};
use super::RacingConfig;
use crate::error::{GnepError, Result};

pub const STATE_DIM: usize = 6;
pub const INPUT_DIM: usize = 2;

/// `[v, psi, s, t, X, Y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Speed (m/s).
    pub v: f64,
    /// Heading error to the centerline (rad).
    pub psi: f64,
    /// Arc-length progress (m).
    pub s: f64,
    /// Lateral deviation, positive to the left (m).
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl VehicleState {
    /// State at Frenet coordinates `(s, t)` with inertial position filled in.
    pub fn on_track(track: &Track, s: f64, t: f64, v: f64, psi: f64) -> Self {
        let (x, y) = track.frenet_to_inertial(s, t);
        Self { v, psi, s, t, x, y }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.v, self.psi, self.s, self.t, self.x, self.y]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            v: v[0],
            psi: v[1],
            s: v[2],
            t: v[3],
            x: v[4],
            y: v[5],
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// `[u_a, u_delta]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleInput {
    /// Longitudinal acceleration (m/s^2).
    pub accel: f64,
    /// Front steering angle (rad).
    pub steer: f64,
}

impl VehicleInput {
    pub fn to_array(&self) -> [f64; INPUT_DIM] {
        [self.accel, self.steer]
    }
}

/// One Euler step of the Frenet bicycle, generic over the scalar so that
/// Jacobians and Hessians can be taken with dual numbers.
///
/// The curvature is the blended profile of [`Track::curvature_blended`], so the
/// step is continuously differentiable across segment joints.
pub fn step_generic<D: Scalar>(
    x: &[D; STATE_DIM],
    u: &[D; INPUT_DIM],
    track: &Track,
    dt: f64,
    wheelbase: f64,
) -> [D; STATE_DIM] {
    let [v, psi, s, t, _, _] = *x;
    let [accel, steer] = *u;
    let kappa = track.curvature_blended(s);
    let (sin_psi, cos_psi) = psi.sin_cos();
    let s_dot = v * cos_psi / (-t * kappa + 1.0);
    let v_next = v + accel * dt;
    let psi_next = psi + (v * steer.tan() / wheelbase - s_dot * kappa) * dt;
    let s_next = s + s_dot * dt;
    let t_next = t + v * sin_psi * dt;
    let (x_next, y_next, _) = track.frenet_generic(s_next, t_next);
    [v_next, psi_next, s_next, t_next, x_next, y_next]
}

/// Advances `state` by one step, rejecting states at or beyond the Frenet singularity.
pub fn bicycle_step(
    state: &VehicleState,
    input: &VehicleInput,
    track: &Track,
    cfg: &RacingConfig,
) -> Result<VehicleState> {
    let margin = 1.0 - track.curvature_blended(state.s) * state.t;
    if margin <= 0.0 {
        return Err(GnepError::FrenetSingularity {
            s: state.s,
            t: state.t,
            margin,
        });
    }
    let next = step_generic(&state.to_array(), &input.to_array(), track, cfg.dt, cfg.wheelbase);
    Ok(VehicleState::from_slice(&next))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RacingConfig {
        RacingConfig::default()
    }

    #[test]
    fn straight_coasting() {
        let track = Track::straight(20.0, 0.5).unwrap();
        let x0 = VehicleState::on_track(&track, 1.0, 0.1, 2.0, 0.0);
        let x1 = bicycle_step(&x0, &VehicleInput::default(), &track, &cfg()).unwrap();
        assert!((x1.s - 1.2).abs() < 1e-12);
        assert_eq!(x1.t, 0.1);
        assert_eq!(x1.psi, 0.0);
        assert_eq!((x1.x, x1.y), track.frenet_to_inertial(x1.s, x1.t));
    }

    #[test]
    fn acceleration_updates_speed() {
        let track = Track::straight(20.0, 0.5).unwrap();
        let x0 = VehicleState::on_track(&track, 1.0, 0.0, 2.0, 0.0);
        let u = VehicleInput { accel: 1.0, steer: 0.0 };
        assert!((bicycle_step(&x0, &u, &track, &cfg()).unwrap().v - 2.1).abs() < 1e-12);
    }

    #[test]
    fn curvature_matched_steering_holds_heading() {
        let track = Track::circle(2.0, 0.5).unwrap();
        let c = cfg();
        let x0 = VehicleState::on_track(&track, 0.5, 0.0, 1.0, 0.0);
        let u = VehicleInput {
            accel: 0.0,
            steer: (c.wheelbase * 0.5f64).atan(),
        };
        let x1 = bicycle_step(&x0, &u, &track, &c).unwrap();
        assert!(x1.psi.abs() < 1e-15);
    }

    #[test]
    fn singularity_is_rejected() {
        let track = Track::circle(1.0, 2.0).unwrap();
        let x0 = VehicleState::on_track(&track, 0.5, 1.0, 1.0, 0.0);
        assert!(matches!(
            bicycle_step(&x0, &VehicleInput::default(), &track, &cfg()),
            Err(GnepError::FrenetSingularity { .. })
        ));
    }

    #[test]
    fn inertial_position_tracks_frenet_on_curves() {
        let track = Track::circle(2.0, 0.5).unwrap();
        let mut x = VehicleState::on_track(&track, 0.0, -0.2, 2.5, 0.05);
        let u = VehicleInput { accel: 0.5, steer: 0.2 };
        for _ in 0..30 {
            x = bicycle_step(&x, &u, &track, &cfg()).unwrap();
            let (px, py) = track.frenet_to_inertial(x.s, x.t);
            assert!((px - x.x).abs() < 1e-9 && (py - x.y).abs() < 1e-9);
        }
    }
}
