//! Randomized closed-loop races with paired seeds.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::race::{run_race, RaceFailure, RaceScenario, Winner, EGO, OPPONENT};
use crate::error::{GnepError, Result};
use crate::mcp::{McpSolver, SolverConfig};
use crate::racing::{RacingConfig, StartState, Track, TrajectoryRow, VehicleState};

/// Consecutive rejected draws before the geometry is declared unusable.
pub const MAX_REJECTIONS: usize = 100;

/// Ranges of the randomized start, relative where noted.
pub const EGO_S_OFFSET: (f64, f64) = (-1.75, -1.5);
pub const OPPONENT_V: (f64, f64) = (1.0, 2.0);
pub const EGO_V_OFFSET: (f64, f64) = (0.25, 0.75);
/// Ego lateral range as a fraction of the half width.
pub const EGO_T_FRACTION: f64 = 1.0 / 3.0;
/// Opponent lateral offset from the ego as a fraction of the half width.
pub const OPPONENT_T_FRACTION: f64 = 1.0 / 8.0;

/// The random stream of run `run` under `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Draws `[opponent, ego]` starts until the cars are at least `d_safe` apart.
pub fn sample_initial_conditions(rng: &mut ChaCha8Rng, track: &Track, cfg: &RacingConfig) -> Result<[StartState; 2]> {
    let h = track.half_width();
    for _ in 0..MAX_REJECTIONS {
        let opp_s = rng.random_range(0.0..=track.length());
        let ego_s = opp_s + rng.random_range(EGO_S_OFFSET.0..=EGO_S_OFFSET.1);
        let opp_v = rng.random_range(OPPONENT_V.0..=OPPONENT_V.1);
        let ego_v = opp_v + rng.random_range(EGO_V_OFFSET.0..=EGO_V_OFFSET.1);
        let ego_t = rng.random_range(-EGO_T_FRACTION * h..=EGO_T_FRACTION * h);
        let opp_t = ego_t + rng.random_range(-OPPONENT_T_FRACTION * h..=OPPONENT_T_FRACTION * h);
        let starts = [
            StartState {
                s: opp_s,
                t: opp_t,
                v: opp_v,
                psi: 0.0,
            },
            StartState {
                s: ego_s,
                t: ego_t,
                v: ego_v,
                psi: 0.0,
            },
        ];
        if starts[0].to_state(track).distance(&starts[1].to_state(track)) >= cfg.d_safe {
            return Ok(starts);
        }
    }
    Err(GnepError::Invalid(format!(
        "no collision-free start found in {MAX_REJECTIONS} draws; check the track geometry"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunClass {
    Win,
    Loss,
    Collision,
    Failure,
}

#[derive(Clone, Debug, Serialize)]
pub struct McRecord {
    pub run: usize,
    /// `[opponent, ego]`.
    pub start: [StartState; 2],
    pub class: RunClass,
    pub winner: Winner,
    pub final_s: [f64; 2],
    pub min_distance: f64,
    pub steps: usize,
    pub failure: Option<RaceFailure>,
    #[serde(skip)]
    pub trajectory: Vec<TrajectoryRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McSettings {
    pub n: usize,
    pub seed: u64,
    pub ego_alpha: f64,
    pub duration: f64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub n: usize,
    pub seed: u64,
    pub ego_alpha: f64,
    pub duration: f64,
    pub wins: usize,
    pub losses: usize,
    pub collisions: usize,
    pub failures: usize,
    pub win_percentage: f64,
    pub racing: RacingConfig,
    pub records: Vec<McRecord>,
}

fn run_one(track: &Arc<Track>, cfg: &RacingConfig, settings: &McSettings, run: usize) -> Result<McRecord> {
    let mut rng = run_rng(settings.seed, run as u64);
    let start = sample_initial_conditions(&mut rng, track, cfg)?;
    let initial: [VehicleState; 2] = start.map(|s| s.to_state(track));
    let scenario = RaceScenario {
        track: track.clone(),
        cfg: cfg.clone(),
        initial,
        ego_alpha: settings.ego_alpha,
        duration: settings.duration,
    };
    let solver = McpSolver::new(SolverConfig::default())?;
    let out = run_race(&scenario, &solver)?;
    let class = if out.failure.is_some() {
        RunClass::Failure
    } else if out.collision {
        RunClass::Collision
    } else if out.winner == Winner::Ego {
        RunClass::Win
    } else {
        RunClass::Loss
    };
    let last = out.final_states();
    Ok(McRecord {
        run,
        start,
        class,
        winner: out.winner,
        final_s: [last[OPPONENT].s, last[EGO].s],
        min_distance: out.min_distance,
        steps: out.steps(),
        failure: out.failure.clone(),
        trajectory: out.trajectory_rows(),
    })
}

/// Runs `settings.n` races with per-run random streams of `settings.seed`, so
/// two studies with the same seed race the same starts.
pub fn run_monte_carlo(track: &Track, cfg: &RacingConfig, settings: &McSettings) -> Result<McReport> {
    if settings.n == 0 {
        return Err(GnepError::Invalid("Monte Carlo needs at least one run".into()));
    }
    cfg.validate()?;
    let track = Arc::new(track.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| GnepError::Invalid(format!("thread pool: {e}")))?;
    let records: Vec<McRecord> = pool.install(|| {
        (0..settings.n)
            .into_par_iter()
            .map(|run| run_one(&track, cfg, settings, run))
            .collect::<Result<_>>()
    })?;
    let count = |c: RunClass| records.iter().filter(|r| r.class == c).count();
    let wins = count(RunClass::Win);
    Ok(McReport {
        n: settings.n,
        seed: settings.seed,
        ego_alpha: settings.ego_alpha,
        duration: settings.duration,
        wins,
        losses: count(RunClass::Loss),
        collisions: count(RunClass::Collision),
        failures: count(RunClass::Failure),
        win_percentage: 100.0 * wins as f64 / settings.n as f64,
        racing: cfg.clone(),
        records,
    })
}
