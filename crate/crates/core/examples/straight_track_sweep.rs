//! Sweeping the trailing car's aggressiveness on a straight track: the
//! solution moves continuously and the trailing car's cost drops as it
//! yields less at the collision constraint.

use std::path::Path;

use gnep::equilibrium::check_equilibrium;
use gnep::mcp::{McpSolver, SolverConfig};
use gnep::racing::{build_racing_game, ScenarioConfig};
use gnep::scenarios::{alpha_sweep, log_spaced, SweepResult};
use gnep::Result;

pub fn run_example() -> Result<SweepResult> {
    let cfg = ScenarioConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/straight.json"))?;
    let track = cfg.build_track()?;
    let [lead, trail] = cfg.initial_states(&track);
    let game = build_racing_game(&track, &cfg.racing, lead, trail)?;
    let solver = McpSolver::new(SolverConfig::default())?;
    let sweep = alpha_sweep(&game, &log_spaced(0.05, 20.0, 15), true, &solver)?;
    println!("{:>8} {:>10} {:>10} {:>5}", "alpha", "J1", "J2", "jump");
    for p in &sweep.points {
        println!("{:8.4} {:10.5} {:10.5} {:>5}", p.alpha, p.costs[0], p.costs[1], p.jump);
    }
    let last = sweep.points.last().expect("non-empty sweep");
    let g = game.with_alpha(last.alpha)?;
    let report = check_equilibrium(&g.game, &g.mcp()?.profile(&last.z), 0, 1e-3)?;
    println!("alpha {:.1}: {:?}, largest unilateral improvement {:.2e}", last.alpha, report.verdict, report.max_improvement());
    Ok(sweep)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
