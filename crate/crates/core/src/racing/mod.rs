//! Two-car racing dynamic game on a Frenet track.

mod dynamics;
mod game;
mod io;
mod track;

pub use dynamics::{bicycle_step, step_generic, VehicleInput, VehicleState, INPUT_DIM, STATE_DIM};
pub use game::{build_racing_game, rollout_initial_guess, GuessMode, RacingGame, RacingLayout};
pub use io::{write_trajectory_csv, ScenarioConfig, StartState, TrajectoryRow, TRAJECTORY_HEADER};
pub use track::{Pose, Scalar, Segment, SegmentKind, SegmentSpec, Track, TrackSpec};

use serde::{Deserialize, Serialize};

use crate::error::{GnepError, Result};

/// Horizon, vehicle limits and game weights shared by both cars.
///
/// Per-car arrays are indexed by game player: `[0]` is the leading car
/// (the opponent in closed-loop races), `[1]` the trailing car (the ego).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RacingConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Input-effort weight in the cost.
    pub beta: f64,
    /// Minimum center distance between the cars (m); enforced in squared form.
    pub d_safe: f64,
    pub v_max: [f64; 2],
    pub v_min: f64,
    pub wheelbase: f64,
    pub accel_max: f64,
    pub steer_max: f64,
    /// Lateral bound is `|t| <= half_width - lateral_margin`.
    pub lateral_margin: f64,
    /// Shared-constraint weight of player 1 relative to player 0.
    pub alpha: f64,
}

impl Default for RacingConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 0.1,
            beta: 0.1,
            d_safe: 0.4,
            v_max: [2.85, 3.0],
            v_min: 0.0,
            wheelbase: 0.3,
            accel_max: 3.0,
            steer_max: 0.4,
            lateral_margin: 0.1,
            alpha: 1.0,
        }
    }
}

impl RacingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("beta", self.beta),
            ("d_safe", self.d_safe),
            ("v_max[0]", self.v_max[0]),
            ("v_max[1]", self.v_max[1]),
            ("wheelbase", self.wheelbase),
            ("accel_max", self.accel_max),
            ("steer_max", self.steer_max),
            ("alpha", self.alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GnepError::Invalid(format!("racing config: {name} must be positive")));
            }
        }
        if self.horizon < 2 {
            return Err(GnepError::Invalid("racing config: horizon must be at least 2".into()));
        }
        if !(self.v_min >= 0.0 && self.v_min < self.v_max[0].min(self.v_max[1])) {
            return Err(GnepError::Invalid("racing config: need 0 <= v_min < v_max".into()));
        }
        if !(self.lateral_margin >= 0.0) {
            return Err(GnepError::Invalid("racing config: lateral_margin must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            alpha,
            ..self.clone()
        }
    }

    /// Lateral bound `H - margin` for `track`.
    pub fn lateral_limit(&self, track: &Track) -> f64 {
        track.half_width() - self.lateral_margin
    }
}
