//! A small paired Monte Carlo study: the same random starts raced with the
//! ego normalized and aggressive. Pass a run count as the first argument.

use std::path::Path;

use gnep::racing::ScenarioConfig;
use gnep::scenarios::{run_monte_carlo, McReport, McSettings};
use gnep::Result;

pub fn run_study(n: usize) -> Result<[McReport; 2]> {
    let cfg = ScenarioConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/l_track.json"))?;
    let track = cfg.build_track()?;
    let study = |ego_alpha| {
        let settings = McSettings {
            n,
            seed: 7,
            ego_alpha,
            duration: cfg.duration,
            jobs: 0,
        };
        run_monte_carlo(&track, &cfg.racing, &settings)
    };
    let reports = [study(1.0)?, study(0.05)?];
    for r in &reports {
        println!(
            "ego alpha {:>4}: {:5.1}% wins ({} wins, {} losses, {} collisions, {} failures)",
            r.ego_alpha, r.win_percentage, r.wins, r.losses, r.collisions, r.failures
        );
    }
    Ok(reports)
}

pub fn run_example() -> Result<[McReport; 2]> {
    run_study(2)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let n = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    run_study(n).map(|_| ())
}
