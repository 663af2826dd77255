//! Multiplier-free equilibrium certification by unilateral deviation search.
//!
//! Small players without equality constraints are checked by an exhaustive
//! grid over their search box followed by one refinement pass. Larger players
//! (or players bound by equalities, which a grid cannot hit) are checked by
//! solving their own best-response problem with the others frozen, from the
//! candidate point and from a few deterministic perturbations of it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::eval::{ScalarFn, VectorFn};
use crate::game::{GameSpec, Player, ScalingFactors, StrategyProfile, FEASIBILITY_TOL};
use crate::kkt::{build_mcp, McpLayout};
use crate::mcp::{McpSolver, SolverConfig};

/// Player dimension above which the grid is replaced by local best responses.
pub const MAX_GRID_DIM: usize = 4;
/// Number of perturbed restarts of the local best-response search.
const RESTARTS: u64 = 4;
/// Size of the perturbation applied to each restart.
const PERTURBATION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CheckMethod {
    Grid { points_per_dim: usize },
    LocalBestResponse { starts: usize, converged: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlayerCheck {
    pub player: usize,
    /// `J_i(x) - J_i(best deviation)`, clamped at zero.
    pub improvement: f64,
    /// Best unilateral deviation found for this player's block.
    pub deviation: Vec<f64>,
    pub method: CheckMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub players: Vec<PlayerCheck>,
    pub verdict: Verdict,
    pub eps: f64,
}

impl EquilibriumReport {
    pub fn max_improvement(&self) -> f64 {
        self.players.iter().map(|p| p.improvement).fold(0.0, f64::max)
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

/// Searches every player's unilateral deviations from `x` and reports the best
/// improvement found. Never looks at multipliers.
///
/// Fails if `x` violates any constraint by more than the feasibility tolerance.
pub fn check_equilibrium(
    game: &GameSpec,
    x: &StrategyProfile,
    grid_per_dim: usize,
    eps: f64,
) -> Result<EquilibriumReport> {
    let xs = x.as_slice();
    game.validate_at(xs)?;
    game.ensure_feasible(xs, FEASIBILITY_TOL)?;
    let grid_per_dim = grid_per_dim.max(2);
    let mut players = Vec::with_capacity(game.num_players());
    let mut inconclusive = false;
    for i in 0..game.num_players() {
        let p = game.player(i);
        let check = if p.dim <= MAX_GRID_DIM && p.eq.is_empty() {
            grid_check(game, xs, i, grid_per_dim)
        } else {
            let check = local_check(game, xs, i)?;
            if let CheckMethod::LocalBestResponse { converged: 0, .. } = check.method {
                inconclusive = true;
            }
            check
        };
        players.push(check);
    }
    let worst = players.iter().map(|p| p.improvement).fold(0.0, f64::max);
    let verdict = if worst > eps {
        Verdict::Refuted
    } else if inconclusive {
        Verdict::Inconclusive
    } else {
        Verdict::Certified
    };
    Ok(EquilibriumReport { players, verdict, eps })
}

/// `x` with player `i`'s block replaced by `y`.
fn with_block(game: &GameSpec, x: &[f64], i: usize, y: &[f64]) -> Vec<f64> {
    let mut full = x.to_vec();
    full[game.block(i)].copy_from_slice(y);
    full
}

/// True if `y` is feasible for player `i` given the others at `x`.
fn deviation_feasible(game: &GameSpec, x: &[f64], i: usize, y: &[f64]) -> bool {
    let p = game.player(i);
    let ok = |v: DVector<f64>| v.iter().all(|g| *g <= FEASIBILITY_TOL);
    p.eq.value(y).iter().all(|h| h.abs() <= FEASIBILITY_TOL)
        && ok(p.ineq.value(y))
        && ok(game.shared().value(&with_block(game, x, i, y)))
}

fn grid_check(game: &GameSpec, x: &[f64], i: usize, points: usize) -> PlayerCheck {
    let p = game.player(i);
    let own = &x[game.block(i)];
    let base = game.cost(i, x);
    let bounds: Vec<(f64, f64)> = match &p.search_box {
        Some(b) => b.clone(),
        None => own.iter().map(|v| (v - 1.0, v + 1.0)).collect(),
    };
    let mut best = (base, own.to_vec());
    let scan = |bounds: &[(f64, f64)], best: &mut (f64, Vec<f64>)| {
        let total = points.pow(bounds.len() as u32);
        let mut y = vec![0.0; bounds.len()];
        for idx in 0..total {
            let mut rem = idx;
            for (d, (lo, hi)) in bounds.iter().enumerate() {
                let k = rem % points;
                rem /= points;
                y[d] = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            }
            if !deviation_feasible(game, x, i, &y) {
                continue;
            }
            let c = game.cost(i, &with_block(game, x, i, &y));
            if c < best.0 {
                *best = (c, y.clone());
            }
        }
    };
    scan(&bounds, &mut best);
    // Refine around the incumbent at ten times the resolution.
    let refined: Vec<(f64, f64)> = bounds
        .iter()
        .zip(&best.1)
        .map(|((lo, hi), c)| {
            let h = (hi - lo) / (points - 1) as f64;
            (c - 2.0 * h, c + 2.0 * h)
        })
        .collect();
    scan(&refined, &mut best);
    PlayerCheck {
        player: i,
        improvement: (base - best.0).max(0.0),
        deviation: best.1,
        method: CheckMethod::Grid { points_per_dim: points },
    }
}

/// Player `i`'s optimization problem with everyone else frozen at `x`, as a
/// one-player game whose shared block holds the coupling constraints.
pub fn best_response_game(game: &GameSpec, x: &[f64], i: usize) -> Result<GameSpec> {
    let p = game.player(i);
    let block = game.block(i);
    let frozen = x.to_vec();
    let lift = move |block: std::ops::Range<usize>, frozen: &[f64], y: &[f64]| {
        let mut full = frozen.to_vec();
        full[block].copy_from_slice(y);
        full
    };
    let cost = {
        let (c1, c2, c3) = (game.players()[i].cost.clone(), game.players()[i].cost.clone(), game.players()[i].cost.clone());
        let (f1, f2, f3) = (frozen.clone(), frozen.clone(), frozen.clone());
        let (b1, b2, b3) = (block.clone(), block.clone(), block.clone());
        ScalarFn::new(move |y| c1.value(&lift(b1.clone(), &f1, y)))
            .with_gradient(move |y| c2.partial_gradient(&lift(b2.clone(), &f2, y), b2.clone()))
            .with_hessian(move |y| {
                c3.partial_hessian(&lift(b3.clone(), &f3, y), b3.clone())
                    .columns(b3.start, b3.len())
                    .into_owned()
            })
    };
    let shared = game.shared().clone();
    let coupling = {
        let (s1, s2, s3) = (shared.clone(), shared.clone(), shared);
        let (f1, f2, f3) = (frozen.clone(), frozen.clone(), frozen);
        let (b1, b2, b3) = (block.clone(), block.clone(), block);
        VectorFn::new(s1.len(), move |y| s1.value(&lift(b1.clone(), &f1, y)))
            .with_jacobian(move |y| {
                let j = s2.jacobian(&lift(b2.clone(), &f2, y));
                j.columns(b2.start, b2.len()).into_owned()
            })
            .with_weighted_hessian(move |y, w| {
                let h = s3.weighted_hessian(&lift(b3.clone(), &f3, y), w);
                h.view((b3.start, b3.start), (b3.len(), b3.len())).into_owned()
            })
    };
    let player = Player::new(p.dim, cost).with_eq(p.eq.clone()).with_ineq(p.ineq.clone());
    GameSpec::new(vec![player], coupling)
}

fn local_check(game: &GameSpec, x: &[f64], i: usize) -> Result<PlayerCheck> {
    let sub = best_response_game(game, x, i)?;
    let problem = build_mcp(&sub, &ScalingFactors::uniform(1, sub.shared_len()))?;
    let layout = McpLayout::for_game(&sub);
    let solver = McpSolver::new(SolverConfig::default())?;
    let own = &x[game.block(i)];
    let base = game.cost(i, x);
    let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
    let mut starts = vec![own.to_vec()];
    for _ in 0..RESTARTS {
        starts.push(own.iter().map(|v| v + PERTURBATION * rng.random_range(-1.0..1.0)).collect());
    }
    let mut best = (base, own.to_vec());
    let mut converged = 0;
    for start in &starts {
        let mut z0 = DVector::zeros(layout.len());
        z0.rows_mut(0, start.len()).copy_from_slice(start);
        let r = solver.solve(&problem, &z0)?;
        if !r.converged() {
            continue;
        }
        converged += 1;
        let y: Vec<f64> = r.z.rows(0, start.len()).iter().copied().collect();
        if !deviation_feasible(game, x, i, &y) {
            continue;
        }
        let c = game.cost(i, &with_block(game, x, i, &y));
        if c < best.0 {
            best = (c, y);
        }
    }
    Ok(PlayerCheck {
        player: i,
        improvement: (base - best.0).max(0.0),
        deviation: best.1,
        method: CheckMethod::LocalBestResponse {
            starts: starts.len(),
            converged,
        },
    })
}

/// Largest per-player stationarity residual after a least-squares fit of
/// multipliers on the constraints active at `x` (within `active_tol`).
///
/// Signs of the fitted multipliers are not constrained.
pub fn fitted_stationarity(game: &GameSpec, x: &[f64], active_tol: f64) -> f64 {
    let shared = game.shared();
    let s_val = shared.value(x);
    let s_jac = shared.jacobian(x);
    let mut worst: f64 = 0.0;
    for i in 0..game.num_players() {
        let p = game.player(i);
        let b = game.block(i);
        let own = &x[b.clone()];
        let grad = p.cost.partial_gradient(x, b.clone());
        let mut cols: Vec<DVector<f64>> = Vec::new();
        if !p.eq.is_empty() {
            let jh = p.eq.jacobian(own);
            cols.extend(jh.row_iter().map(|r| r.transpose()));
        }
        if !p.ineq.is_empty() {
            let g = p.ineq.value(own);
            let jg = p.ineq.jacobian(own);
            for (j, row) in jg.row_iter().enumerate() {
                if g[j] >= -active_tol {
                    cols.push(row.transpose());
                }
            }
        }
        for (j, row) in s_jac.row_iter().enumerate() {
            if s_val[j] >= -active_tol {
                cols.push(row.columns(b.start, b.len()).transpose());
            }
        }
        let residual = if cols.is_empty() {
            grad.amax()
        } else {
            let a = DMatrix::from_columns(&cols);
            let svd = a.clone().svd(true, true);
            match svd.solve(&(-&grad), 1e-12) {
                Ok(m) => (&grad + &a * m).amax(),
                Err(_) => grad.amax(),
            }
        };
        worst = worst.max(residual);
    }
    worst
}
