//! Scenario config files and trajectory CSV output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dynamics::{VehicleInput, VehicleState};
use super::track::{Track, TrackSpec};
use super::RacingConfig;
use crate::error::Result;

pub const TRAJECTORY_HEADER: [&str; 10] = ["player", "k", "v", "psi", "s", "t", "X", "Y", "u_a", "u_delta"];

/// Initial Frenet placement of one car.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartState {
    pub s: f64,
    #[serde(default)]
    pub t: f64,
    pub v: f64,
    #[serde(default)]
    pub psi: f64,
}

impl StartState {
    pub fn to_state(&self, track: &Track) -> VehicleState {
        VehicleState::on_track(track, self.s, self.t, self.v, self.psi)
    }
}

fn default_duration() -> f64 {
    2.0
}

fn default_starts() -> [StartState; 2] {
    [
        StartState {
            s: 1.5,
            t: 0.0,
            v: 2.0,
            psi: 0.0,
        },
        StartState {
            s: 0.0,
            t: 0.0,
            v: 2.0,
            psi: 0.0,
        },
    ]
}

/// Everything needed to set up a sweep or race, loadable from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub track: TrackSpec,
    #[serde(default)]
    pub racing: RacingConfig,
    /// `[leader, follower]`.
    #[serde(default = "default_starts")]
    pub start: [StartState; 2],
    /// Closed-loop race length (s).
    #[serde(default = "default_duration")]
    pub duration: f64,
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.racing.validate()?;
        Ok(cfg)
    }

    pub fn build_track(&self) -> Result<Track> {
        Track::from_spec(&self.track)
    }

    pub fn initial_states(&self, track: &Track) -> [VehicleState; 2] {
        [self.start[0].to_state(track), self.start[1].to_state(track)]
    }
}

/// One row of a trajectory CSV. Inputs are empty on the terminal knot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub player: usize,
    pub k: usize,
    pub state: VehicleState,
    pub input: Option<VehicleInput>,
}

impl TrajectoryRow {
    /// Rows for one car from its knot states `x_0..x_N` and inputs `u_0..u_{N-1}`.
    pub fn from_plan(player: usize, states: &[VehicleState], inputs: &[VehicleInput]) -> Vec<Self> {
        states
            .iter()
            .enumerate()
            .map(|(k, state)| Self {
                player,
                k,
                state: *state,
                input: inputs.get(k).copied(),
            })
            .collect()
    }
}

pub fn write_trajectory_csv<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        let s = &r.state;
        let mut rec = vec![r.player.to_string(), r.k.to_string()];
        rec.extend([s.v, s.psi, s.s, s.t, s.x, s.y].iter().map(|v| v.to_string()));
        match r.input {
            Some(u) => rec.extend([u.accel.to_string(), u.steer.to_string()]),
            None => rec.extend([String::new(), String::new()]),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let json = r#"{"track":{"half_width":0.5,"segments":[{"kind":"line","length":20}]}}"#;
        let cfg: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.racing, RacingConfig::default());
        assert_eq!(cfg.duration, 2.0);
        assert!(cfg.build_track().is_ok());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{"track":{"half_width":0.5,"segments":[]},"racing":{"horizn":5}}"#;
        assert!(serde_json::from_str::<ScenarioConfig>(json).is_err());
    }

    #[test]
    fn csv_layout() {
        let track = Track::straight(10.0, 0.5).unwrap();
        let states = [
            VehicleState::on_track(&track, 0.0, 0.0, 1.0, 0.0),
            VehicleState::on_track(&track, 0.1, 0.0, 1.0, 0.0),
        ];
        let rows = TrajectoryRow::from_plan(1, &states, &[VehicleInput { accel: 0.5, steer: 0.0 }]);
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "player,k,v,psi,s,t,X,Y,u_a,u_delta");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",0.5,0"));
        assert!(lines[2].ends_with(",,"));
    }
}
