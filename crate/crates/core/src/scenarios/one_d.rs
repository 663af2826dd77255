//! Three cars on two lanes, one step long.
//!
//! Car 1 races car 2 on separate lanes; car 3 shares car 2's lane, must stay
//! ahead of it (`x_2 <= x_3`) and is rewarded when car 1 wins. With
//! `x_i = x_i(0) + v_i dt` every solution has `x_1 = 1` and, when the shared
//! row is active, `x_2 = x_3 = 1.5 - 0.75 a_2 / (a_2 + a_3)` with fictitious
//! multiplier `sigma = 0.75 / (a_2 + a_3)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GnepError, Result};
use crate::eval::{ScalarFn, VectorFn};
use crate::game::{actual_multipliers, GameSpec, Player, ScalingFactors, StrategyProfile};
use crate::kkt::{build_mcp, McpLayout, McpProblem};
use crate::mcp::{McpSolver, SolverResult};

pub const ONE_D_START: [f64; 3] = [0.0, 0.5, 0.75];
pub const ONE_D_DT: f64 = 1.0;
/// Per-velocity box scanned by the equilibrium oracle.
pub const ONE_D_SEARCH_BOX: (f64, f64) = (-1.5, 2.5);

/// Which variables each car decides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OneDEncoding {
    /// `v_i` only; positions are eliminated.
    Velocity,
    /// `(x_i, v_i)` with the equality `x_i - x_i(0) - v_i dt = 0`.
    PositionVelocity,
}

#[derive(Clone, Debug)]
pub struct OneDGame {
    pub encoding: OneDEncoding,
    pub game: GameSpec,
    pub factors: ScalingFactors,
}

/// `J_1 = -x_1 + x_2`, `J_2 = -x_2 + x_1`, `J_3 = -x_1 + x_2`, each plus `v_i^2 / 2`.
fn position_cost(player: usize, x: &[f64; 3], v: f64) -> f64 {
    let race = match player {
        0 => -x[0] + x[1],
        1 => -x[1] + x[0],
        _ => -x[0] + x[1],
    };
    race + 0.5 * v * v
}

/// `d J_i / d x_j` of the race terms above.
const POSITION_GRAD: [[f64; 3]; 3] = [[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [-1.0, 1.0, 0.0]];

fn check_factors(a2: f64, a3: f64) -> Result<()> {
    for (name, a) in [("a2", a2), ("a3", a3)] {
        if !(a > 0.0 && a.is_finite()) {
            return Err(GnepError::Invalid(format!("factor {name} must be positive, got {a}")));
        }
    }
    Ok(())
}

/// The velocity-only encoding: one variable per car, `N_z = 3 + 1`.
pub fn build_1d_game(a2: f64, a3: f64) -> Result<OneDGame> {
    check_factors(a2, a3)?;
    let pos = |v: &[f64]| -> [f64; 3] { std::array::from_fn(|i| ONE_D_START[i] + v[i] * ONE_D_DT) };
    let players = (0..3)
        .map(|i| {
            let cost = ScalarFn::new(move |v| position_cost(i, &pos(v), v[i]))
                .with_gradient(move |v| {
                    let mut g = DVector::from_iterator(3, POSITION_GRAD[i].iter().map(|d| d * ONE_D_DT));
                    g[i] += v[i];
                    g
                })
                .with_hessian(move |_| {
                    let mut h = DMatrix::zeros(3, 3);
                    h[(i, i)] = 1.0;
                    h
                });
            Player::new(1, cost).with_search_box(vec![ONE_D_SEARCH_BOX])
        })
        .collect();
    let shared = VectorFn::affine(
        DMatrix::from_row_slice(1, 3, &[0.0, ONE_D_DT, -ONE_D_DT]),
        DVector::from_element(1, ONE_D_START[1] - ONE_D_START[2]),
    );
    Ok(OneDGame {
        encoding: OneDEncoding::Velocity,
        game: GameSpec::new(players, shared)?,
        factors: ScalingFactors::new(vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, a2),
            DVector::from_element(1, a3),
        ])?,
    })
}

/// The `(x_i, v_i)` encoding: `N_z = 6 + 3 + 0 + 1 = 10`.
pub fn build_1d_game_full(a2: f64, a3: f64) -> Result<OneDGame> {
    let reduced = build_1d_game(a2, a3)?;
    let players = (0..3)
        .map(|i| {
            let cost = ScalarFn::new(move |z| {
                let x = [z[0], z[2], z[4]];
                position_cost(i, &x, z[2 * i + 1])
            })
            .with_gradient(move |z| {
                let mut g = DVector::zeros(6);
                for j in 0..3 {
                    g[2 * j] = POSITION_GRAD[i][j];
                }
                g[2 * i + 1] = z[2 * i + 1];
                g
            })
            .with_hessian(move |_| {
                let mut h = DMatrix::zeros(6, 6);
                h[(2 * i + 1, 2 * i + 1)] = 1.0;
                h
            });
            let dynamics = VectorFn::affine(
                DMatrix::from_row_slice(1, 2, &[1.0, -ONE_D_DT]),
                DVector::from_element(1, -ONE_D_START[i]),
            );
            Player::new(2, cost).with_eq(dynamics)
        })
        .collect();
    let shared = VectorFn::affine(
        DMatrix::from_row_slice(1, 6, &[0.0, 0.0, 1.0, 0.0, -1.0, 0.0]),
        DVector::zeros(1),
    );
    Ok(OneDGame {
        encoding: OneDEncoding::PositionVelocity,
        game: GameSpec::new(players, shared)?,
        factors: reduced.factors,
    })
}

impl OneDGame {
    pub fn mcp(&self) -> Result<McpProblem> {
        build_mcp(&self.game, &self.factors)
    }

    pub fn positions(&self, x: &[f64]) -> [f64; 3] {
        match self.encoding {
            OneDEncoding::Velocity => std::array::from_fn(|i| ONE_D_START[i] + x[i] * ONE_D_DT),
            OneDEncoding::PositionVelocity => [x[0], x[2], x[4]],
        }
    }

    pub fn velocities(&self, x: &[f64]) -> [f64; 3] {
        match self.encoding {
            OneDEncoding::Velocity => [x[0], x[1], x[2]],
            OneDEncoding::PositionVelocity => [x[1], x[3], x[5]],
        }
    }

    /// Strategy profile with cars 2 and 3 both at position `p` and car 1 at `x1`.
    pub fn profile_at(&self, x1: f64, p: f64) -> StrategyProfile {
        let x = [x1, p, p];
        let v: [f64; 3] = std::array::from_fn(|i| (x[i] - ONE_D_START[i]) / ONE_D_DT);
        let flat = match self.encoding {
            OneDEncoding::Velocity => v.to_vec(),
            OneDEncoding::PositionVelocity => (0..3).flat_map(|i| [x[i], v[i]]).collect(),
        };
        StrategyProfile::for_game(&self.game, DVector::from_vec(flat)).expect("layout matches")
    }
}

/// Hand-derived solution of the 1D game.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OneDClosedForm {
    pub x: [f64; 3],
    pub sigma: f64,
}

pub fn one_d_closed_form(a2: f64, a3: f64) -> OneDClosedForm {
    let sigma = 0.75 / (a2 + a3);
    let p = 1.5 - a2 * sigma;
    OneDClosedForm { x: [1.0, p, p], sigma }
}

#[derive(Clone, Debug, Serialize)]
pub struct OneDSolution {
    pub a2: f64,
    pub a3: f64,
    pub x: [f64; 3],
    pub v: [f64; 3],
    /// Fictitious shared multiplier.
    pub sigma: f64,
    /// Each car's actual multiplier `a_i sigma`.
    pub sigmas: [f64; 3],
    pub costs: [f64; 3],
    #[serde(skip)]
    pub result: SolverResult,
}

impl OneDSolution {
    pub fn converged(&self) -> bool {
        self.result.converged()
    }
}

/// Solves the velocity encoding from `z = 0`.
pub fn solve_1d(a2: f64, a3: f64, solver: &McpSolver) -> Result<OneDSolution> {
    let g = build_1d_game(a2, a3)?;
    let problem = g.mcp()?;
    let layout = McpLayout::for_game(&g.game);
    let result = solver.solve(&problem, &DVector::zeros(layout.len()))?;
    let (x, mult) = layout.split(&result.z);
    let sigmas = actual_multipliers(&g.factors, &mult.sigma)?;
    let costs = g.game.costs(x.as_slice());
    Ok(OneDSolution {
        a2,
        a3,
        x: g.positions(x.as_slice()),
        v: g.velocities(x.as_slice()),
        sigma: mult.sigma[0],
        sigmas: std::array::from_fn(|i| sigmas[i][0]),
        costs: [costs[0], costs[1], costs[2]],
        result,
    })
}
