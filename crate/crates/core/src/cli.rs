//! The `gnep` command line: `solve-1d`, `sweep`, `race` and `mc`.
//!
//! Every invocation writes its outputs and a `manifest.json` into `--out`.
//! Exit codes: 0 success, 1 usage or config error, 2 numerical failure.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{GnepError, Result};
use crate::mcp::{McpSolver, SolverConfig};
use crate::racing::{build_racing_game, write_trajectory_csv, ScenarioConfig, TrajectoryRow};
use crate::scenarios::race::{run_race, RaceScenario};
use crate::scenarios::sweep::{alpha_sweep, log_spaced, racing_plan};
use crate::scenarios::{run_monte_carlo, solve_1d, McReport, McSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Residual tolerance of `solve-1d`.
pub const ONE_D_TOL: f64 = 1e-10;

pub const SWEEP_HEADER: [&str; 5] = ["alpha", "J1", "J2", "converged", "jump_flag"];
pub const MC_HEADER: [&str; 15] = [
    "run",
    "opp_s",
    "opp_t",
    "opp_v",
    "ego_s",
    "ego_t",
    "ego_v",
    "class",
    "winner",
    "opp_final_s",
    "ego_final_s",
    "min_distance",
    "steps",
    "failure_step",
    "failure_agent",
];

#[derive(Debug, Parser)]
#[command(name = "gnep", version, about = "Normalized and non-normalized generalized Nash equilibria")]
pub struct Cli {
    /// Base seed for randomized studies.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for Monte Carlo studies (0 uses all cores).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "gnep-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the three-car 1D game with scaling factors (1, a2, a3).
    #[command(name = "solve-1d")]
    Solve1d(Solve1dArgs),
    /// Sweep the trailing car's aggressiveness factor on a racing scenario.
    Sweep(SweepArgs),
    /// Run one closed-loop race.
    Race(RaceArgs),
    /// Run a Monte Carlo study of closed-loop races from random starts.
    Mc(McArgs),
}

#[derive(Debug, Args)]
pub struct Solve1dArgs {
    #[arg(long, default_value_t = 1.0)]
    pub a2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub a3: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// `lo:hi:n` for n log-spaced values, or a comma-separated list.
    #[arg(long, default_value = "0.05:20:15")]
    pub alphas: String,
    /// Solve every alpha from the cold starts only.
    #[arg(long)]
    pub cold: bool,
}

#[derive(Debug, Args)]
pub struct RaceArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub ego_alpha: f64,
    /// Overrides the config's race duration (s).
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub ego_alpha: f64,
    #[arg(long)]
    pub duration: Option<f64>,
    /// Also write each run's executed trajectory.
    #[arg(long)]
    pub trajectories: bool,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub version: String,
    /// Arguments after the program name; rerunning them reproduces the outputs.
    pub args: Vec<String>,
    /// Output files relative to `out`.
    pub files: Vec<String>,
    pub exit_code: i32,
    pub duration_s: f64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numerical(String),
}

impl From<GnepError> for CliError {
    fn from(e: GnepError) -> Self {
        match e {
            GnepError::Invalid(_)
            | GnepError::NonPositiveFactor { .. }
            | GnepError::Track(_)
            | GnepError::Io(_)
            | GnepError::Json(_)
            | GnepError::Csv(_)
            | GnepError::InitialCollision { .. }
            | GnepError::SamplingExhausted(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Files written so far, relative to the output directory.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> std::result::Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(GnepError::from)?;
        }
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(path).map_err(GnepError::from)?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::result::Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(GnepError::from)?;
        writeln!(w).map_err(GnepError::from)?;
        w.flush().map_err(GnepError::from)?;
        Ok(())
    }

    fn trajectory(&mut self, name: &str, rows: &[TrajectoryRow]) -> std::result::Result<(), CliError> {
        let w = self.create(name)?;
        write_trajectory_csv(w, rows)?;
        Ok(())
    }
}

/// Parses an alpha spec: `lo:hi:n` (log-spaced) or `a,b,c`.
pub fn parse_alphas(spec: &str) -> Result<Vec<f64>> {
    let bad = || GnepError::Invalid(format!("cannot parse alpha list '{spec}'"));
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(GnepError::Invalid("alpha list is empty".into()));
    }
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, n] = parts.as_slice() else {
            return Err(bad());
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi > 0.0) {
            return Err(GnepError::Invalid("alphas must be positive".into()));
        }
        if n == 0 {
            return Err(GnepError::Invalid("alpha list is empty".into()));
        }
        return Ok(log_spaced(lo, hi, n));
    }
    spec.split(',').map(|a| a.trim().parse::<f64>().map_err(|_| bad())).collect()
}

fn load_config(path: &Path) -> std::result::Result<ScenarioConfig, CliError> {
    ScenarioConfig::load(path).map_err(|e| CliError::Usage(format!("cannot load config {}: {e}", path.display())))
}

fn solver() -> std::result::Result<McpSolver, CliError> {
    Ok(McpSolver::new(SolverConfig::default())?)
}

fn cmd_solve_1d(a: &Solve1dArgs, out: &mut Outputs) -> std::result::Result<bool, CliError> {
    let tight = McpSolver::new(SolverConfig {
        tol: ONE_D_TOL,
        ..SolverConfig::default()
    })?;
    let sol = solve_1d(a.a2, a.a3, &tight)?;
    println!("factors  (1, {}, {})", a.a2, a.a3);
    println!("x        {:.9} {:.9} {:.9}", sol.x[0], sol.x[1], sol.x[2]);
    println!("v        {:.9} {:.9} {:.9}", sol.v[0], sol.v[1], sol.v[2]);
    println!("sigma    {:.9}", sol.sigma);
    println!("sigma_i  {:.9} {:.9} {:.9}", sol.sigmas[0], sol.sigmas[1], sol.sigmas[2]);
    println!("costs    {:.9} {:.9} {:.9}", sol.costs[0], sol.costs[1], sol.costs[2]);
    println!("status   {:?} ({} iterations)", sol.result.status, sol.result.iterations);
    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        solution: &'a crate::scenarios::OneDSolution,
        status: crate::mcp::SolverStatus,
        residual: f64,
        iterations: usize,
    }
    out.json(
        "solve_1d.json",
        &Report {
            solution: &sol,
            status: sol.result.status,
            residual: sol.result.residual_inf,
            iterations: sol.result.iterations,
        },
    )?;
    Ok(sol.converged())
}

fn cmd_sweep(a: &SweepArgs, out: &mut Outputs) -> std::result::Result<bool, CliError> {
    let cfg = load_config(&a.config)?;
    let alphas = parse_alphas(&a.alphas)?;
    let track = cfg.build_track()?;
    let game = build_racing_game(&track, &cfg.racing, cfg.start[0].to_state(&track), cfg.start[1].to_state(&track))?;
    let result = alpha_sweep(&game, &alphas, !a.cold, &solver()?)?;
    let mut w = csv::Writer::from_writer(out.create("sweep.csv")?);
    w.write_record(SWEEP_HEADER).map_err(GnepError::from)?;
    for p in &result.points {
        w.write_record([
            p.alpha.to_string(),
            p.costs[0].to_string(),
            p.costs[1].to_string(),
            p.converged.to_string(),
            p.jump.to_string(),
        ])
        .map_err(GnepError::from)?;
    }
    w.flush().map_err(GnepError::from)?;
    drop(w);
    for (i, p) in result.points.iter().enumerate().filter(|(_, p)| p.converged) {
        let plan = racing_plan(&game.with_alpha(p.alpha)?, &p.z);
        let rows: Vec<TrajectoryRow> = plan
            .iter()
            .enumerate()
            .flat_map(|(player, (states, inputs))| TrajectoryRow::from_plan(player, states, inputs))
            .collect();
        out.trajectory(&format!("trajectories/alpha_{i:03}.csv"), &rows)?;
    }
    out.json("sweep.json", &result)?;
    let converged = result.points.iter().filter(|p| p.converged).count();
    println!("{converged}/{} alphas converged, {} jump(s)", result.points.len(), result.jumps.len());
    for j in &result.jumps {
        println!("jump between alpha {:.4} and {:.4} (distance {:.3})", j.from_alpha, j.to_alpha, j.distance);
    }
    Ok(result.all_converged())
}

fn cmd_race(a: &RaceArgs, out: &mut Outputs) -> std::result::Result<bool, CliError> {
    let cfg = load_config(&a.config)?;
    let track = std::sync::Arc::new(cfg.build_track()?);
    let scenario = RaceScenario {
        initial: cfg.initial_states(&track),
        track,
        cfg: cfg.racing.clone(),
        ego_alpha: a.ego_alpha,
        duration: a.duration.unwrap_or(cfg.duration),
    };
    let outcome = run_race(&scenario, &solver()?)?;
    out.trajectory("race_trajectory.csv", &outcome.trajectory_rows())?;
    #[derive(Serialize)]
    struct Report<'a> {
        ego_alpha: f64,
        duration: f64,
        racing: &'a crate::racing::RacingConfig,
        winner: crate::scenarios::Winner,
        collision: bool,
        failure: &'a Option<crate::scenarios::race::RaceFailure>,
        min_distance: f64,
        steps: usize,
        final_s: [f64; 2],
        solves: usize,
        iterations: usize,
    }
    let last = outcome.final_states();
    out.json(
        "race.json",
        &Report {
            ego_alpha: a.ego_alpha,
            duration: scenario.duration,
            racing: &scenario.cfg,
            winner: outcome.winner,
            collision: outcome.collision,
            failure: &outcome.failure,
            min_distance: outcome.min_distance,
            steps: outcome.steps(),
            final_s: [last[0].s, last[1].s],
            solves: outcome.solves,
            iterations: outcome.iterations,
        },
    )?;
    println!(
        "winner {:?} after {} steps, final s opponent {:.4} ego {:.4}, min distance {:.4}{}",
        outcome.winner,
        outcome.steps(),
        last[0].s,
        last[1].s,
        outcome.min_distance,
        if outcome.collision { ", collision" } else { "" }
    );
    if let Some(f) = &outcome.failure {
        println!("solver failure at step {} ({:?}): {}", f.step, f.agent, f.reason);
    }
    Ok(outcome.failure.is_none())
}

/// The serde name of a unit enum variant.
fn variant_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

fn write_mc_csv(report: &McReport, out: &mut Outputs) -> std::result::Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out.create("mc_runs.csv")?);
    w.write_record(MC_HEADER).map_err(GnepError::from)?;
    for r in &report.records {
        let [opp, ego] = r.start;
        let (fstep, fagent) = match &r.failure {
            Some(f) => (f.step.to_string(), variant_name(&f.agent)),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.run.to_string(),
            opp.s.to_string(),
            opp.t.to_string(),
            opp.v.to_string(),
            ego.s.to_string(),
            ego.t.to_string(),
            ego.v.to_string(),
            variant_name(&r.class),
            variant_name(&r.winner),
            r.final_s[0].to_string(),
            r.final_s[1].to_string(),
            r.min_distance.to_string(),
            r.steps.to_string(),
            fstep,
            fagent,
        ])
        .map_err(GnepError::from)?;
    }
    w.flush().map_err(GnepError::from)?;
    Ok(())
}

fn cmd_mc(a: &McArgs, seed: u64, jobs: usize, out: &mut Outputs) -> std::result::Result<bool, CliError> {
    let cfg = load_config(&a.config)?;
    let track = cfg.build_track()?;
    let settings = McSettings {
        n: a.n,
        seed,
        ego_alpha: a.ego_alpha,
        duration: a.duration.unwrap_or(cfg.duration),
        jobs,
    };
    let report = run_monte_carlo(&track, &cfg.racing, &settings)?;
    out.json("mc_report.json", &report)?;
    write_mc_csv(&report, out)?;
    if a.trajectories {
        for r in &report.records {
            out.trajectory(&format!("runs/run_{:04}.csv", r.run), &r.trajectory)?;
        }
    }
    println!(
        "ego alpha {}: {} wins, {} losses, {} collisions, {} failures of {} runs (win {:.1}%)",
        report.ego_alpha, report.wins, report.losses, report.collisions, report.failures, report.n, report.win_percentage
    );
    Ok(true)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let start = Instant::now();
    if let Err(e) = fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create output directory {}: {e}", cli.out.display());
        return EXIT_USAGE;
    }
    let mut out = Outputs {
        dir: cli.out.clone(),
        files: Vec::new(),
    };
    let (name, config, result) = match &cli.command {
        Command::Solve1d(a) => ("solve-1d", None, cmd_solve_1d(a, &mut out)),
        Command::Sweep(a) => ("sweep", Some(a.config.clone()), cmd_sweep(a, &mut out)),
        Command::Race(a) => ("race", Some(a.config.clone()), cmd_race(a, &mut out)),
        Command::Mc(a) => ("mc", Some(a.config.clone()), cmd_mc(a, cli.seed, cli.jobs, &mut out)),
    };
    let code = match result {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("error: the solver did not converge");
            EXIT_NUMERICAL
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("error: {m}");
            EXIT_NUMERICAL
        }
    };
    let manifest = RunManifest {
        subcommand: name.to_string(),
        config,
        seed: cli.seed,
        jobs: cli.jobs,
        out: cli.out.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        args: args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
        files: out.files.clone(),
        exit_code: code,
        duration_s: start.elapsed().as_secs_f64(),
    };
    let written = File::create(cli.out.join("manifest.json"))
        .map_err(GnepError::from)
        .and_then(|f| Ok(serde_json::to_writer_pretty(BufWriter::new(f), &manifest)?));
    if let Err(e) = written {
        eprintln!("error: cannot write manifest: {e}");
        return EXIT_USAGE.max(code);
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_specs() {
        assert_eq!(parse_alphas("0.1, 1,10").unwrap(), vec![0.1, 1.0, 10.0]);
        let a = parse_alphas("0.05:20:15").unwrap();
        assert_eq!(a.len(), 15);
        assert!((a[14] - 20.0).abs() < 1e-12);
        assert!(parse_alphas("").is_err());
        assert!(parse_alphas("1:2").is_err());
        assert!(parse_alphas("0:2:3").is_err());
        assert!(parse_alphas("a,b").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["gnep", "--out", out, "solve-1d", "--a2", "0"]), EXIT_USAGE);
        assert_eq!(run(["gnep", "--out", out, "solve-1d", "--a2", "x"]), EXIT_USAGE);
        assert_eq!(run(["gnep", "--out", out, "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["gnep", "--out", out, "sweep", "--config", "/nonexistent.json"]), EXIT_USAGE);
    }

    #[test]
    fn solve_1d_writes_report_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["gnep", "--out", out, "solve-1d", "--a2", "1", "--a3", "3"]), EXIT_OK);
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("solve_1d.json")).unwrap()).unwrap();
        assert!((report["x"][1].as_f64().unwrap() - 1.3125).abs() < 1e-6);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["subcommand"], "solve-1d");
        assert_eq!(manifest["files"][0], "solve_1d.json");
    }
}
