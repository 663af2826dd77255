//! The three-car 1D game: the normalized equilibrium and two non-normalized
//! ones, each checked against the closed form and certified by grid search.

use gnep::equilibrium::check_equilibrium;
use gnep::mcp::{McpSolver, SolverConfig};
use gnep::scenarios::{build_1d_game, one_d_closed_form, solve_1d};
use gnep::Result;

pub fn run_example() -> Result<Vec<[f64; 3]>> {
    let solver = McpSolver::new(SolverConfig::default())?;
    let mut out = Vec::new();
    for (a2, a3) in [(1.0, 1.0), (3.0, 1.0), (1.0, 3.0)] {
        let sol = solve_1d(a2, a3, &solver)?;
        let exact = one_d_closed_form(a2, a3);
        let g = build_1d_game(a2, a3)?;
        let profile = g.profile_at(sol.x[0], sol.x[1]);
        let report = check_equilibrium(&g.game, &profile, 201, 1e-3)?;
        println!(
            "a = (1, {a2}, {a3}): x = ({:.6}, {:.6}, {:.6}) closed form {:.6}, sigma {:.6} closed form {:.6}, {:?}",
            sol.x[0], sol.x[1], sol.x[2], exact.x[1], sol.sigma, exact.sigma, report.verdict,
        );
        out.push(sol.x);
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
