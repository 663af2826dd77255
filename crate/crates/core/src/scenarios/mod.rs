//! Experiments built on the solver: the 1D three-car game, aggressiveness
//! sweeps, closed-loop races and Monte Carlo studies of them.

pub mod monte_carlo;
pub mod one_d;
pub mod race;
pub mod sweep;

pub use monte_carlo::{run_monte_carlo, sample_initial_conditions, McRecord, McReport, McSettings, RunClass};
pub use one_d::{build_1d_game, build_1d_game_full, one_d_closed_form, solve_1d, OneDGame, OneDSolution};
pub use race::{run_race, RaceOutcome, RaceScenario, Winner};
pub use sweep::{alpha_sweep, log_spaced, OneDSweep, SweepModel, SweepPoint, SweepResult, JUMP_THRESHOLD};

use nalgebra::DVector;

use crate::error::Result;
use crate::kkt::McpProblem;
use crate::mcp::{McpSolver, SolverResult};

fn keep_best(best: &mut Option<SolverResult>, r: SolverResult) {
    if best.as_ref().is_none_or(|b| r.residual_inf < b.residual_inf) {
        *best = Some(r);
    }
}

/// Solves `problem` trying, in order: the warm start, the smoothing
/// continuation from it, every cold start (when a warm start was given, the
/// converged one closest to it wins) and the smoothing continuation from each
/// cold start.
///
/// Returns the failed attempt with the smallest residual if nothing converges.
pub fn solve_robust(
    solver: &McpSolver,
    problem: &McpProblem,
    warm: Option<&DVector<f64>>,
    cold: &[DVector<f64>],
) -> Result<SolverResult> {
    let mut failed: Option<SolverResult> = None;
    if let Some(w) = warm {
        let r = solver.solve(problem, w)?;
        if r.converged() {
            return Ok(r);
        }
        keep_best(&mut failed, r);
        let r = solver.solve_smoothed(problem, w)?;
        if r.converged() {
            return Ok(r);
        }
        keep_best(&mut failed, r);
    }
    let n = problem.layout().x.len();
    let distance = |z: &DVector<f64>| match warm {
        Some(w) => (z.rows(0, n) - w.rows(0, n)).amax(),
        None => 0.0,
    };
    let mut best: Option<(f64, SolverResult)> = None;
    for z0 in cold {
        let r = solver.solve(problem, z0)?;
        if r.converged() {
            let d = distance(&r.z);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, r));
            }
            if warm.is_none() {
                break;
            }
        } else {
            keep_best(&mut failed, r);
        }
    }
    if let Some((_, r)) = best {
        return Ok(r);
    }
    for z0 in cold {
        let r = solver.solve_smoothed(problem, z0)?;
        if r.converged() {
            return Ok(r);
        }
        keep_best(&mut failed, r);
    }
    match failed {
        Some(r) => Ok(r),
        None => solver.solve(problem, &DVector::zeros(problem.layout().len())),
    }
}
