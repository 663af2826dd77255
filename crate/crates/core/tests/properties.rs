//! Randomized invariants of the solver, the 1D game and the racing game.

use gnep::equilibrium::{check_equilibrium, fitted_stationarity};
use gnep::game::{actual_multipliers, ScalingFactors};
use gnep::kkt::{kkt_residual, McpLayout};
use gnep::mcp::{solve_mcp, Complementarity, LinearComplementarity, McpSolver, SolverConfig};
use gnep::racing::{build_racing_game, GuessMode, RacingConfig, Track, VehicleState};
use gnep::scenarios::{build_1d_game, one_d_closed_form, solve_1d};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn tight() -> McpSolver {
    McpSolver::new(SolverConfig {
        tol: 1e-10,
        ..SolverConfig::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_factors_leave_sigma_unchanged(sigma in prop::collection::vec(0.0f64..1e3, 1..6), players in 1usize..5) {
        let sigma = DVector::from_vec(sigma);
        let f = ScalingFactors::uniform(players, sigma.len());
        for s in actual_multipliers(&f, &sigma).unwrap() {
            prop_assert_eq!(&s, &sigma);
        }
    }

    #[test]
    fn one_d_matches_closed_form(a2 in 0.05f64..20.0, a3 in 0.05f64..20.0) {
        let sol = solve_1d(a2, a3, &tight()).unwrap();
        let exact = one_d_closed_form(a2, a3);
        prop_assert!(sol.converged());
        prop_assert!((sol.x[0] - 1.0).abs() <= 1e-9);
        prop_assert!((sol.x[1] - exact.x[1]).abs() <= 1e-6 && (sol.x[2] - exact.x[2]).abs() <= 1e-6);
        prop_assert!((sol.sigma - exact.sigma).abs() <= 1e-6);
        prop_assert!((sol.sigmas[1] - a2 * sol.sigma).abs() <= 1e-15 && (sol.sigmas[2] - a3 * sol.sigma).abs() <= 1e-15);
    }

    #[test]
    fn one_d_response_is_monotone_in_alpha(a2 in 0.05f64..20.0, lo in 0.01f64..50.0, step in 0.0f64..50.0) {
        let s = tight();
        let x_lo = solve_1d(a2, a2 * lo, &s).unwrap().x[1];
        let x_hi = solve_1d(a2, a2 * (lo + step), &s).unwrap().x[1];
        prop_assert!(x_hi >= x_lo - 1e-9);
    }

    #[test]
    fn one_d_solutions_are_complementary_and_certified(a2 in 0.1f64..10.0, a3 in 0.1f64..10.0) {
        let g = build_1d_game(a2, a3).unwrap();
        let sol = solve_1d(a2, a3, &tight()).unwrap();
        let r = kkt_residual(&g.game, &g.factors, &sol.result.z).unwrap();
        prop_assert!(r.complementarity <= 1e-8, "{:?}", r);
        let profile = g.profile_at(sol.x[0], sol.x[1]);
        let report = check_equilibrium(&g.game, &profile, 81, 1e-4).unwrap();
        prop_assert!(report.is_certified());
        prop_assert!(fitted_stationarity(&g.game, profile.as_slice(), 1e-6) <= 1e-4);
    }

    #[test]
    fn lcp_merit_never_increases(entries in prop::collection::vec(-1.0f64..1.0, 9), q in prop::collection::vec(-3.0f64..3.0, 3), z0 in prop::collection::vec(0.0f64..3.0, 3)) {
        let b = DMatrix::from_vec(3, 3, entries);
        let m = &b * b.transpose() + DMatrix::identity(3, 3) * 0.1;
        let p = LinearComplementarity::lcp(m, DVector::from_vec(q));
        let r = solve_mcp(&p, &SolverConfig::default(), &DVector::from_vec(z0.clone())).unwrap();
        prop_assert!(r.converged());
        prop_assert!(r.trace.windows(2).all(|w| w[1].merit <= w[0].merit));
        let again = solve_mcp(&p, &SolverConfig::default(), &DVector::from_vec(z0)).unwrap();
        prop_assert_eq!(r.trace, again.trace);
        let f = p.residual(&r.z);
        prop_assert!(r.z.iter().zip(f.iter()).all(|(z, f)| z.min(*f).abs() <= 1e-5));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn racing_solutions_respect_dynamics_and_separation(
        gap in 0.6f64..2.0,
        t_lead in -0.3f64..0.3,
        t_trail in -0.3f64..0.3,
        v in 1.0f64..2.5,
        alpha in 0.1f64..10.0,
    ) {
        let track = Track::circle(3.0, 0.5).unwrap();
        let cfg = RacingConfig { alpha, ..RacingConfig::default() };
        let lead = VehicleState::on_track(&track, gap, t_lead, v, 0.0);
        let trail = VehicleState::on_track(&track, 0.0, t_trail, v + 0.5, 0.0);
        prop_assume!(lead.distance(&trail) >= cfg.d_safe);
        let game = build_racing_game(&track, &cfg, lead, trail).unwrap();
        let problem = game.mcp().unwrap();
        let solver = McpSolver::new(SolverConfig::default()).unwrap();
        let r = GuessMode::ALL
            .iter()
            .map(|m| solver.solve(&problem, &game.initial_guess(*m).unwrap()).unwrap())
            .find(|r| r.converged());
        prop_assume!(r.is_some());
        let z = r.unwrap().z;
        let x = &z.as_slice()[..problem.layout().x.len()];
        prop_assert!(game.max_defect(x) <= 1e-5);
        prop_assert!(game.min_distance(x) >= cfg.d_safe - 1e-4);
        for p in 0..2 {
            for s in game.states(x, p) {
                let (px, py) = track.frenet_to_inertial(s.s, s.t);
                prop_assert!((px - s.x).abs() <= 1e-5 && (py - s.y).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn swapping_labels_and_inverting_alpha_maps_solutions(gap in 0.8f64..2.0, t in -0.3f64..0.3, alpha in 0.1f64..10.0) {
        let track = Track::straight(40.0, 0.5).unwrap();
        let cfg = RacingConfig { alpha, ..RacingConfig::default() };
        let lead = VehicleState::on_track(&track, gap, t, 2.0, 0.0);
        let trail = VehicleState::on_track(&track, 0.0, -t, 2.5, 0.0);
        let game = build_racing_game(&track, &cfg, lead, trail).unwrap();
        let problem = game.mcp().unwrap();
        let solver = McpSolver::new(SolverConfig::default()).unwrap();
        let r = solver.solve(&problem, &game.initial_guess(GuessMode::FollowCenter).unwrap()).unwrap();
        prop_assume!(r.converged());

        let swapped_cfg = RacingConfig { alpha: 1.0 / alpha, v_max: [cfg.v_max[1], cfg.v_max[0]], ..cfg.clone() };
        let swapped = build_racing_game(&track, &swapped_cfg, trail, lead).unwrap();
        let swapped_problem = swapped.mcp().unwrap();
        let layout: &McpLayout = problem.layout();
        let mut z = r.z.clone();
        for (a, b) in [
            (problem.game().block(0), problem.game().block(1)),
            (layout.mu[0].clone(), layout.mu[1].clone()),
            (layout.lambda[0].clone(), layout.lambda[1].clone()),
        ] {
            let (ra, rb) = (r.z.rows(a.start, a.len()).into_owned(), r.z.rows(b.start, b.len()).into_owned());
            z.rows_mut(a.start, a.len()).copy_from(&rb);
            z.rows_mut(b.start, b.len()).copy_from(&ra);
        }
        for j in layout.sigma.clone() {
            z[j] *= alpha;
        }
        let before = problem.residual(&r.z).amax();
        let after = swapped_problem.residual(&z);
        let lower = swapped_problem.lower_bounds();
        let stationarity = after.rows(0, layout.x.len()).amax();
        prop_assert!(stationarity <= 1e-6 + before, "{stationarity} vs {before}");
        for j in 0..z.len() {
            if lower[j].is_finite() {
                prop_assert!(z[j].min(after[j]).abs() <= 1e-6);
            } else {
                prop_assert!(after[j].abs() <= 1e-6);
            }
        }
    }
}
