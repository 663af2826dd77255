//! Defining a game from closures: two firms sharing a capacity `q_0 + q_1 <= 2`.
//!
//! Equal factors give the normalized equilibrium; shifting the factors moves
//! the split of the shared capacity toward the firm that is charged less for it.

use gnep::equilibrium::check_equilibrium;
use gnep::eval::{ScalarFn, VectorFn};
use gnep::game::{actual_multipliers, GameSpec, Player, ScalingFactors};
use gnep::kkt::{build_mcp, McpLayout};
use gnep::mcp::{McpSolver, SolverConfig};
use gnep::Result;
use nalgebra::DVector;

fn firm(i: usize, price: f64) -> Player {
    let cost = ScalarFn::new(move |q: &[f64]| -(price - q[0] - q[1]) * q[i] + 0.5 * q[i] * q[i]);
    let bounds = VectorFn::new(1, |q: &[f64]| DVector::from_element(1, -q[0]));
    Player::new(1, cost).with_ineq(bounds).with_search_box(vec![(0.0, 3.0)])
}

pub fn run_example() -> Result<Vec<[f64; 2]>> {
    let capacity = VectorFn::new(1, |q: &[f64]| DVector::from_element(1, q[0] + q[1] - 2.0));
    let game = GameSpec::new(vec![firm(0, 6.0), firm(1, 6.0)], capacity)?;
    let solver = McpSolver::new(SolverConfig::default())?;
    let layout = McpLayout::for_game(&game);
    let mut out = Vec::new();
    for a1 in [1.0, 0.5, 2.0] {
        let factors = ScalingFactors::from_scalars(&[1.0, a1], 1)?;
        let problem = build_mcp(&game, &factors)?;
        let r = solver.solve(&problem, &DVector::zeros(layout.len()))?;
        let (x, mult) = layout.split(&r.z);
        let sigmas = actual_multipliers(&factors, &mult.sigma)?;
        let report = check_equilibrium(&game, &problem.profile(&r.z), 301, 1e-3)?;
        println!(
            "factors (1, {a1}): q = ({:.4}, {:.4}), sigma_i = ({:.4}, {:.4}), {:?}",
            x[0], x[1], sigmas[0][0], sigmas[1][0], report.verdict
        );
        out.push([x[0], x[1]]);
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
