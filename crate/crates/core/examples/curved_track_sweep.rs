//! Sweeping aggressiveness on a circular track: while `alpha` is small the
//! trailing car holds the inside line; past some `alpha` it yields, drops back
//! toward the centerline and both costs jump.

use std::path::Path;

use gnep::mcp::{McpSolver, SolverConfig};
use gnep::racing::{build_racing_game, ScenarioConfig};
use gnep::scenarios::sweep::racing_plan;
use gnep::scenarios::{alpha_sweep, log_spaced, SweepResult};
use gnep::Result;

pub fn run_example() -> Result<SweepResult> {
    let cfg = ScenarioConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/curved.json"))?;
    let track = cfg.build_track()?;
    let [lead, trail] = cfg.initial_states(&track);
    let game = build_racing_game(&track, &cfg.racing, lead, trail)?;
    let solver = McpSolver::new(SolverConfig::default())?;
    let sweep = alpha_sweep(&game, &log_spaced(1e-2, 1e2, 25), true, &solver)?;
    for p in &sweep.points {
        let plan = racing_plan(&game, &p.z);
        let t_final = plan[1].0.last().map_or(f64::NAN, |s| s.t);
        println!(
            "alpha {:9.4}  J1 {:8.4}  J2 {:8.4}  final t of car 2 {:+.3}{}",
            p.alpha,
            p.costs[0],
            p.costs[1],
            t_final,
            if p.jump { "  <- jump" } else { "" }
        );
    }
    for j in &sweep.jumps {
        println!("mode jump between alpha {:.3} and {:.3}", j.from_alpha, j.to_alpha);
    }
    Ok(sweep)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
