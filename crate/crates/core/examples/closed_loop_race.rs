//! A two-second receding-horizon race on the L-shaped track, once with the
//! ego playing the normalized strategy and once aggressively.

use std::path::Path;
use std::sync::Arc;

use gnep::mcp::{McpSolver, SolverConfig};
use gnep::racing::ScenarioConfig;
use gnep::scenarios::race::{run_race, RaceOutcome, RaceScenario};
use gnep::Result;

pub fn run_example() -> Result<Vec<RaceOutcome>> {
    let cfg = ScenarioConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/l_track.json"))?;
    let track = Arc::new(cfg.build_track()?);
    let solver = McpSolver::new(SolverConfig::default())?;
    let mut out = Vec::new();
    for ego_alpha in [1.0, 0.05] {
        let scenario = RaceScenario {
            initial: cfg.initial_states(&track),
            track: track.clone(),
            cfg: cfg.racing.clone(),
            ego_alpha,
            duration: cfg.duration,
        };
        let race = run_race(&scenario, &solver)?;
        let [opp, ego] = race.final_states();
        println!(
            "ego alpha {ego_alpha}: {:?} wins, s = {:.3} vs {:.3}, closest approach {:.3} m, {} solves",
            race.winner, ego.s, opp.s, race.min_distance, race.solves
        );
        out.push(race);
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
