//! Continuation in the aggressiveness factor with mode-jump detection.

use nalgebra::DVector;
use serde::Serialize;

use super::one_d::build_1d_game;
use super::solve_robust;
use crate::error::{GnepError, Result};
use crate::kkt::{McpLayout, McpProblem};
use crate::mcp::{McpSolver, SolverStatus};
use crate::racing::{GuessMode, RacingGame, VehicleInput, VehicleState};

/// Solutions further apart than this (∞-norm of the signature) are a jump.
pub const JUMP_THRESHOLD: f64 = 0.1;

/// A family of games indexed by `alpha`.
pub trait SweepModel {
    fn problem(&self, alpha: f64) -> Result<McpProblem>;

    /// Starting points used when there is no previous solution, best first.
    fn cold_starts(&self, alpha: f64) -> Result<Vec<DVector<f64>>>;

    /// The part of a solution compared between neighbouring `alpha`s.
    fn signature(&self, z: &DVector<f64>) -> Vec<f64>;
}

/// The 1D game with factors `(1, a2, alpha)`; its signature is the final positions.
#[derive(Clone, Copy, Debug)]
pub struct OneDSweep {
    pub a2: f64,
}

impl SweepModel for OneDSweep {
    fn problem(&self, alpha: f64) -> Result<McpProblem> {
        build_1d_game(self.a2, alpha)?.mcp()
    }

    fn cold_starts(&self, alpha: f64) -> Result<Vec<DVector<f64>>> {
        let g = build_1d_game(self.a2, alpha)?;
        Ok(vec![DVector::zeros(McpLayout::for_game(&g.game).len())])
    }

    fn signature(&self, z: &DVector<f64>) -> Vec<f64> {
        let g = build_1d_game(self.a2, 1.0).expect("positive factors");
        g.positions(&z.as_slice()[..3]).to_vec()
    }
}

/// The racing game with player 1's factor swept; its signature is every knot
/// state of both cars.
impl SweepModel for RacingGame {
    fn problem(&self, alpha: f64) -> Result<McpProblem> {
        self.with_alpha(alpha)?.mcp()
    }

    fn cold_starts(&self, _alpha: f64) -> Result<Vec<DVector<f64>>> {
        GuessMode::ALL.iter().map(|m| self.initial_guess(*m)).collect()
    }

    fn signature(&self, z: &DVector<f64>) -> Vec<f64> {
        (0..2)
            .flat_map(|p| self.states(z.as_slice(), p))
            .flat_map(|s| s.to_array())
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub costs: Vec<f64>,
    pub converged: bool,
    pub status: SolverStatus,
    pub residual: f64,
    pub iterations: usize,
    /// True if this solution jumped away from the previous converged one.
    pub jump: bool,
    #[serde(skip)]
    pub z: DVector<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Jump {
    /// Index of the point after the jump.
    pub index: usize,
    pub from_alpha: f64,
    pub to_alpha: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub jumps: Vec<Jump>,
    pub threshold: f64,
}

impl SweepResult {
    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.converged)
    }

    pub fn point_at(&self, alpha: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| (p.alpha - alpha).abs() <= 1e-12 * alpha.max(1.0))
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
            .collect(),
    }
}

/// Solves the model at each `alpha` in order. With `warm_start` each solve
/// starts from the previous converged solution and falls back to the cold
/// starts; otherwise every solve starts cold. Failures are recorded and the
/// sweep continues.
pub fn alpha_sweep<M: SweepModel>(
    model: &M,
    alphas: &[f64],
    warm_start: bool,
    solver: &McpSolver,
) -> Result<SweepResult> {
    if alphas.is_empty() {
        return Err(GnepError::Invalid("alpha list is empty".into()));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(GnepError::Invalid("alphas must be positive".into()));
    }
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GnepError::Invalid("alphas must be strictly increasing".into()));
    }
    let mut points = Vec::with_capacity(alphas.len());
    let mut jumps = Vec::new();
    let mut previous: Option<(DVector<f64>, Vec<f64>)> = None;
    for (index, &alpha) in alphas.iter().enumerate() {
        let problem = model.problem(alpha)?;
        let cold = model.cold_starts(alpha)?;
        let warm = previous.as_ref().filter(|_| warm_start).map(|p| &p.0);
        let r = solve_robust(solver, &problem, warm, &cold)?;
        let mut jump = false;
        if r.converged() {
            let sig = model.signature(&r.z);
            if let Some((_, prev)) = &previous {
                let distance = prev.iter().zip(&sig).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if distance > JUMP_THRESHOLD {
                    jump = true;
                    jumps.push(Jump {
                        index,
                        from_alpha: points.iter().rev().find(|p: &&SweepPoint| p.converged).map_or(alpha, |p| p.alpha),
                        to_alpha: alpha,
                        distance,
                    });
                }
            }
            previous = Some((r.z.clone(), sig));
        }
        let n = problem.layout().x.len();
        points.push(SweepPoint {
            alpha,
            costs: problem.game().costs(&r.z.as_slice()[..n]),
            converged: r.converged(),
            status: r.status,
            residual: r.residual_inf,
            iterations: r.iterations,
            jump,
            z: r.z,
        });
    }
    Ok(SweepResult {
        points,
        jumps,
        threshold: JUMP_THRESHOLD,
    })
}

/// Planned trajectories of both cars at one sweep point.
pub fn racing_plan(game: &RacingGame, z: &DVector<f64>) -> [(Vec<VehicleState>, Vec<VehicleInput>); 2] {
    std::array::from_fn(|p| (game.states(z.as_slice(), p), game.inputs(z.as_slice(), p)))
}
