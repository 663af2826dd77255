//! Receding-horizon race between an ego car and an opponent.
//!
//! Every step both cars solve their own game from the true current states:
//! the opponent with equal factors, the ego with its shared rows scaled by
//! `ego_alpha`. Each applies the first input of its own plan and replans next
//! step from its previous plan shifted by one stage. When that fails the ego
//! continues from the opponent's normalized solution in `alpha`, and only then
//! falls back to the cold starts.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use super::solve_robust;
use super::sweep::log_spaced;
use crate::error::{GnepError, Result};
use crate::mcp::{McpSolver, SolverResult, SolverStatus};
use crate::racing::{
    bicycle_step, build_racing_game, GuessMode, RacingConfig, RacingGame, Track, TrajectoryRow, VehicleInput,
    VehicleState,
};

/// Game player of each car.
pub const OPPONENT: usize = 0;
pub const EGO: usize = 1;
/// Final arc lengths closer than this are a tie.
pub const TIE_TOL: f64 = 1e-6;
/// Executed distances below `d_safe - COLLISION_TOL` are collisions.
pub const COLLISION_TOL: f64 = 1e-6;
/// Number of intermediate factors tried when the ego's game only converges at `alpha = 1`.
const CONTINUATION_STEPS: usize = 4;

#[derive(Clone, Debug)]
pub struct RaceScenario {
    pub track: Arc<Track>,
    /// Vehicle limits and weights; `alpha` is ignored in favour of `ego_alpha`.
    pub cfg: RacingConfig,
    /// `[opponent, ego]`.
    pub initial: [VehicleState; 2],
    pub ego_alpha: f64,
    /// Race length (s).
    pub duration: f64,
}

impl RaceScenario {
    /// `ceil(duration / dt)`.
    pub fn steps(&self) -> usize {
        ((self.duration / self.cfg.dt) - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Ego,
    Opponent,
    Tie,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Opponent,
    Ego,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RaceFailure {
    pub step: usize,
    pub agent: Agent,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RaceOutcome {
    /// `[opponent, ego]` at every executed knot, starting with the initial states.
    pub states: Vec<[VehicleState; 2]>,
    pub inputs: Vec<[VehicleInput; 2]>,
    pub winner: Winner,
    pub collision: bool,
    pub failure: Option<RaceFailure>,
    pub min_distance: f64,
    pub solves: usize,
    pub iterations: usize,
}

impl RaceOutcome {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn final_states(&self) -> &[VehicleState; 2] {
        self.states.last().expect("at least the initial states")
    }

    /// Executed trajectory rows for CSV export (player 0 opponent, 1 ego).
    pub fn trajectory_rows(&self) -> Vec<TrajectoryRow> {
        (0..2)
            .flat_map(|p| {
                let states: Vec<VehicleState> = self.states.iter().map(|s| s[p]).collect();
                let inputs: Vec<VehicleInput> = self.inputs.iter().map(|u| u[p]).collect();
                TrajectoryRow::from_plan(p, &states, &inputs)
            })
            .collect()
    }
}

fn winner(states: &[VehicleState; 2]) -> Winner {
    let lead = states[EGO].s - states[OPPONENT].s;
    if lead.abs() <= TIE_TOL {
        Winner::Tie
    } else if lead > 0.0 {
        Winner::Ego
    } else {
        Winner::Opponent
    }
}

/// Per-agent solve bookkeeping.
struct Planner<'a> {
    solver: &'a McpSolver,
    solves: usize,
    iterations: usize,
}

impl Planner<'_> {
    fn solve(&mut self, game: &RacingGame, warm: Option<&DVector<f64>>) -> Result<SolverResult> {
        let cold: Vec<DVector<f64>> = GuessMode::ALL
            .iter()
            .map(|m| game.initial_guess(*m))
            .collect::<Result<_>>()?;
        let r = solve_robust(self.solver, &game.mcp()?, warm, &cold)?;
        self.solves += 1;
        self.iterations += r.iterations;
        Ok(r)
    }

    fn solve_once(&mut self, game: &RacingGame, z0: &DVector<f64>) -> Result<SolverResult> {
        let r = self.solver.solve(&game.mcp()?, z0)?;
        self.solves += 1;
        self.iterations += r.iterations;
        Ok(r)
    }

    /// Walks the ego's factor from 1 (where `normalized` solved) to `alpha`,
    /// one plain solve per step.
    fn continuation(&mut self, game: &RacingGame, normalized: &DVector<f64>, alpha: f64) -> Result<SolverResult> {
        let mut z = normalized.clone();
        let mut last = None;
        for a in log_spaced(1.0, alpha, CONTINUATION_STEPS + 1).into_iter().skip(1) {
            let r = self.solve_once(&game.with_alpha(a)?, &z)?;
            if !r.converged() {
                return Ok(r);
            }
            z = r.z.clone();
            last = Some(r);
        }
        Ok(last.expect("at least one continuation step"))
    }
}

fn first_input(game: &RacingGame, z: &DVector<f64>, player: usize) -> VehicleInput {
    game.inputs(z.as_slice(), player)[0]
}

fn status_reason(status: SolverStatus, residual: f64) -> String {
    format!("solver status {status:?} (residual {residual:.2e})")
}

/// Plays the race to the end, or until a solver failure or collision.
pub fn run_race(scenario: &RaceScenario, solver: &McpSolver) -> Result<RaceOutcome> {
    if !(scenario.ego_alpha > 0.0 && scenario.ego_alpha.is_finite()) {
        return Err(GnepError::Invalid("ego alpha must be positive".into()));
    }
    if !(scenario.duration >= 0.0) {
        return Err(GnepError::Invalid("race duration must be nonnegative".into()));
    }
    let cfg = &scenario.cfg;
    let opp_cfg = cfg.with_alpha(1.0);
    let ego_cfg = cfg.with_alpha(scenario.ego_alpha);
    let same_game = scenario.ego_alpha == 1.0;
    let mut planner = Planner {
        solver,
        solves: 0,
        iterations: 0,
    };
    let mut states = vec![scenario.initial];
    let mut inputs = Vec::new();
    let mut min_distance = scenario.initial[0].distance(&scenario.initial[1]);
    let mut collision = min_distance < cfg.d_safe - COLLISION_TOL;
    let mut failure = None;
    let mut plans: [Option<DVector<f64>>; 2] = [None, None];
    for step in 0..scenario.steps() {
        if collision {
            break;
        }
        let now = *states.last().unwrap();
        let opp_game = build_racing_game(&scenario.track, &opp_cfg, now[OPPONENT], now[EGO])?;
        let opp_warm = plans[OPPONENT].as_ref().map(|z| opp_game.shifted_guess(z));
        let opp = planner.solve(&opp_game, opp_warm.as_ref())?;
        if !opp.converged() {
            failure = Some(RaceFailure {
                step,
                agent: Agent::Opponent,
                reason: status_reason(opp.status, opp.residual_inf),
            });
            break;
        }
        let (ego_game, ego) = if same_game {
            (opp_game.clone(), opp.clone())
        } else {
            let ego_game = opp_game.with_alpha(scenario.ego_alpha)?;
            debug_assert_eq!(ego_game.cfg, ego_cfg);
            let ego_warm = plans[EGO].as_ref().map(|z| ego_game.shifted_guess(z));
            let mut r = match &ego_warm {
                Some(w) => Some(planner.solve_once(&ego_game, w)?),
                None => None,
            };
            if !r.as_ref().is_some_and(|r| r.converged()) {
                r = Some(planner.continuation(&opp_game, &opp.z, scenario.ego_alpha)?);
            }
            if !r.as_ref().is_some_and(|r| r.converged()) {
                r = Some(planner.solve(&ego_game, ego_warm.as_ref())?);
            }
            let r = r.expect("at least one attempt");
            (ego_game, r)
        };
        if !ego.converged() {
            failure = Some(RaceFailure {
                step,
                agent: Agent::Ego,
                reason: status_reason(ego.status, ego.residual_inf),
            });
            break;
        }
        let u = [first_input(&opp_game, &opp.z, OPPONENT), first_input(&ego_game, &ego.z, EGO)];
        let mut next = now;
        for p in 0..2 {
            match bicycle_step(&now[p], &u[p], &scenario.track, cfg) {
                Ok(s) => next[p] = s,
                Err(e) => {
                    failure = Some(RaceFailure {
                        step,
                        agent: if p == EGO { Agent::Ego } else { Agent::Opponent },
                        reason: e.to_string(),
                    });
                }
            }
        }
        if failure.is_some() {
            break;
        }
        let d = next[0].distance(&next[1]);
        min_distance = min_distance.min(d);
        collision = d < cfg.d_safe - COLLISION_TOL;
        plans = [Some(opp.z), Some(ego.z)];
        inputs.push(u);
        states.push(next);
    }
    let last = *states.last().unwrap();
    Ok(RaceOutcome {
        winner: winner(&last),
        states,
        inputs,
        collision,
        failure,
        min_distance,
        solves: planner.solves,
        iterations: planner.iterations,
    })
}
