//! Damped semismooth Newton method for mixed complementarity problems.
//!
//! Rows with a finite lower bound `l_j` are reformulated with the smoothed
//! Fischer–Burmeister function `phi(z_j - l_j, F_j(z))`; free rows keep
//! `F_j(z)`. Newton directions on `Phi(z) = 0` are globalized by Armijo
//! backtracking on `0.5 * |Phi|^2`.

use std::io::Write;

use faer::linalg::solvers::Solve;
use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result};

/// Smoothing added under the square root of the Fischer–Burmeister function.
pub const FB_SMOOTHING: f64 = 1e-10;

/// `F(z)` with lower bounds on `z`; upper bounds are always `+inf`.
pub trait Complementarity {
    fn dim(&self) -> usize;
    /// `-inf` marks a free row.
    fn lower_bounds(&self) -> &DVector<f64>;
    fn residual(&self, z: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64>;
}

/// Mixed linear complementarity problem `F(z) = M z + q`.
#[derive(Clone, Debug)]
pub struct LinearComplementarity {
    pub m: DMatrix<f64>,
    pub q: DVector<f64>,
    lower: DVector<f64>,
}

impl LinearComplementarity {
    /// Every row bounded below by zero (a standard LCP).
    pub fn lcp(m: DMatrix<f64>, q: DVector<f64>) -> Self {
        let lower = DVector::zeros(q.len());
        Self::with_bounds(m, q, lower)
    }

    pub fn with_bounds(m: DMatrix<f64>, q: DVector<f64>, lower: DVector<f64>) -> Self {
        assert!(m.is_square() && m.nrows() == q.len() && q.len() == lower.len());
        Self { m, q, lower }
    }
}

impl Complementarity for LinearComplementarity {
    fn dim(&self) -> usize {
        self.q.len()
    }

    fn lower_bounds(&self) -> &DVector<f64> {
        &self.lower
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.m * z + &self.q
    }

    fn jacobian(&self, _z: &DVector<f64>) -> DMatrix<f64> {
        self.m.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Convergence tolerance on `|Phi|_inf`.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo_slope: f64,
    pub backtrack: f64,
    pub min_step: f64,
    /// Initial Levenberg shift; multiplied by 10 after every failed factorization.
    pub levenberg_init: f64,
    pub levenberg_max: f64,
    pub fb_smoothing: f64,
    /// Give up when the merit has not halved over this many steps (0 disables).
    pub stall_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            armijo_slope: 1e-4,
            backtrack: 0.5,
            min_step: 1e-12,
            levenberg_init: 1e-8,
            levenberg_max: 1e8,
            fb_smoothing: FB_SMOOTHING,
            stall_window: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("armijo_slope", self.armijo_slope),
            ("min_step", self.min_step),
            ("levenberg_init", self.levenberg_init),
            ("levenberg_max", self.levenberg_max),
            ("fb_smoothing", self.fb_smoothing),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(crate::GnepError::Invalid(format!("solver {name} must be positive")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(crate::GnepError::Invalid("backtracking factor must lie in (0, 1)".into()));
        }
        if self.max_iter == 0 {
            return Err(crate::GnepError::Invalid("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIter,
    LineSearchFailure,
    Singular,
}

/// One accepted (or final) iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual_inf: f64,
    pub merit: f64,
    /// Step length that produced this iterate (0 for the starting point).
    pub step_length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub z: DVector<f64>,
    pub status: SolverStatus,
    pub residual_inf: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
}

impl SolverResult {
    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }
}

/// `a + b - sqrt(a^2 + b^2 + mu_s)` with the default smoothing.
pub fn fischer_burmeister(a: f64, b: f64) -> f64 {
    fischer_burmeister_smoothed(a, b, FB_SMOOTHING)
}

pub fn fischer_burmeister_smoothed(a: f64, b: f64, mu: f64) -> f64 {
    a + b - (a * a + b * b + mu).sqrt()
}

/// Reformulated residual `Phi(z)` using the default smoothing.
pub fn fb_residual<P: Complementarity + ?Sized>(problem: &P, z: &DVector<f64>) -> DVector<f64> {
    phi(problem, z, &problem.residual(z), FB_SMOOTHING)
}

fn phi<P: Complementarity + ?Sized>(problem: &P, z: &DVector<f64>, f: &DVector<f64>, mu: f64) -> DVector<f64> {
    let lower = problem.lower_bounds();
    DVector::from_fn(z.len(), |j, _| {
        if lower[j].is_finite() {
            fischer_burmeister_smoothed(z[j] - lower[j], f[j], mu)
        } else {
            f[j]
        }
    })
}

/// Element of the generalized Jacobian of `Phi`.
fn phi_jacobian<P: Complementarity + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
    f: &DVector<f64>,
    mut jf: DMatrix<f64>,
    mu: f64,
) -> DMatrix<f64> {
    let lower = problem.lower_bounds();
    for j in 0..z.len() {
        if !lower[j].is_finite() {
            continue;
        }
        let a = z[j] - lower[j];
        let b = f[j];
        let r = (a * a + b * b + mu).sqrt();
        let da = 1.0 - a / r;
        let db = 1.0 - b / r;
        let mut row = jf.row_mut(j);
        row.scale_mut(db);
        row[j] += da;
    }
    jf
}

fn merit_of(phi: &DVector<f64>) -> f64 {
    let m = 0.5 * phi.norm_squared();
    if m.is_finite() {
        m
    } else {
        f64::INFINITY
    }
}

/// Dense LU with partial pivoting; `None` when the factor is numerically singular.
fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let view = faer::MatRef::from_column_major_slice(a.as_slice(), n, n);
    let lu = view.partial_piv_lu();
    let u = lu.U();
    let mut dmax: f64 = 0.0;
    let mut dmin = f64::INFINITY;
    for i in 0..n {
        let d = u[(i, i)].abs();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    if !(dmin > 1e-14 * dmax.max(1e-300)) {
        return None;
    }
    let rhs = faer::MatRef::from_column_major_slice(b.as_slice(), n, 1);
    let x = lu.solve(rhs);
    let out = DVector::from_fn(n, |i, _| x[(i, 0)]);
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Semismooth Newton solver with reusable settings.
///
/// An instance is cheap; it is not shared between threads while solving.
#[derive(Clone, Debug, Default)]
pub struct McpSolver {
    config: SolverConfig,
}

impl McpSolver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn solve<P: Complementarity + ?Sized>(&self, problem: &P, z0: &DVector<f64>) -> Result<SolverResult> {
        check_len("initial point", problem.dim(), z0.len())?;
        let cfg = &self.config;
        let mu = cfg.fb_smoothing;
        let lower = problem.lower_bounds();
        let mut z = DVector::from_fn(z0.len(), |j, _| {
            if lower[j].is_finite() {
                z0[j].max(lower[j])
            } else {
                z0[j]
            }
        });
        let mut f = problem.residual(&z);
        let mut phi_z = phi(problem, &z, &f, mu);
        let mut merit = merit_of(&phi_z);
        let mut trace = vec![IterationRecord {
            iteration: 0,
            residual_inf: phi_z.amax(),
            merit,
            step_length: 0.0,
        }];
        if !merit.is_finite() {
            return Ok(finish(z, SolverStatus::Singular, f64::INFINITY, 0, trace));
        }

        for iter in 1..=cfg.max_iter {
            let res_inf = phi_z.amax();
            if res_inf <= cfg.tol {
                return Ok(finish(z, SolverStatus::Converged, res_inf, iter - 1, trace));
            }
            let jphi = phi_jacobian(problem, &z, &f, problem.jacobian(&z), mu);
            let grad = jphi.tr_mul(&phi_z);

            let newton = match lu_solve(&jphi, &(-&phi_z)) {
                Some(d) => Some(d).filter(|d| grad.dot(d) < -1e-12 * d.norm_squared().max(f64::MIN_POSITIVE)),
                None => match levenberg_direction(&jphi, &grad, cfg.levenberg_init, cfg) {
                    Some(d) => Some(d),
                    None => return Ok(finish(z, SolverStatus::Singular, res_inf, iter - 1, trace)),
                },
            };
            let search = |d: &DVector<f64>| armijo(problem, &z, d, grad.dot(d), merit, cfg);
            let mut accepted = newton.as_ref().and_then(search);
            // A damped (or missing) Newton step: also try a Levenberg-Marquardt step
            // scaled by the residual and plain steepest descent, keep the best.
            if accepted.as_ref().is_none_or(|a| a.4 < 1e-3) {
                let mut fallbacks = vec![-&grad];
                if let Some(d) = levenberg_direction(&jphi, &grad, phi_z.norm(), cfg) {
                    fallbacks.insert(0, d);
                }
                for d in &fallbacks {
                    if let Some(cand) = search(d) {
                        if accepted.as_ref().is_none_or(|a| cand.3 < a.3) {
                            accepted = Some(cand);
                        }
                    }
                }
            }
            let Some((zn, fn_, phin, mn, t)) = accepted else {
                return Ok(finish(z, SolverStatus::LineSearchFailure, res_inf, iter - 1, trace));
            };
            z = zn;
            f = fn_;
            phi_z = phin;
            merit = mn;
            trace.push(IterationRecord {
                iteration: iter,
                residual_inf: phi_z.amax(),
                merit,
                step_length: t,
            });
            if stalled(&trace, cfg.stall_window) {
                return Ok(finish(z, SolverStatus::LineSearchFailure, phi_z.amax(), iter, trace));
            }
        }
        let res_inf = phi_z.amax();
        let status = if res_inf <= cfg.tol {
            SolverStatus::Converged
        } else {
            SolverStatus::MaxIter
        };
        Ok(finish(z, status, res_inf, cfg.max_iter, trace))
    }
}

type Trial = (DVector<f64>, DVector<f64>, DVector<f64>, f64, f64);

/// Backtracking along `d`; returns `(z, F, Phi, merit, step)` of the accepted point.
fn armijo<P: Complementarity + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
    d: &DVector<f64>,
    slope: f64,
    merit: f64,
    cfg: &SolverConfig,
) -> Option<Trial> {
    if !(slope < 0.0) {
        return None;
    }
    let mut t = 1.0;
    while t >= cfg.min_step {
        let trial = z + d * t;
        let f_trial = problem.residual(&trial);
        let phi_trial = phi(problem, &trial, &f_trial, cfg.fb_smoothing);
        let m_trial = merit_of(&phi_trial);
        if m_trial <= merit + cfg.armijo_slope * t * slope {
            return Some((trial, f_trial, phi_trial, m_trial, t));
        }
        t *= cfg.backtrack;
    }
    None
}

/// True when the merit failed to halve over the last `window` steps.
fn stalled(trace: &[IterationRecord], window: usize) -> bool {
    if window == 0 || trace.len() <= window {
        return false;
    }
    let now = trace[trace.len() - 1].merit;
    let then = trace[trace.len() - 1 - window].merit;
    now > 0.5 * then
}

/// Smoothing levels visited by [`McpSolver::solve_smoothed`] before the final solve.
pub const SMOOTHING_PATH: [f64; 3] = [1e-2, 1e-4, 1e-6];

impl McpSolver {
    /// Continuation in the Fischer-Burmeister smoothing: each level of
    /// [`SMOOTHING_PATH`] is solved loosely (to `sqrt(mu)`) and warm-starts the
    /// next, ending with a regular [`McpSolver::solve`].
    ///
    /// The returned trace is that of the final solve; `iterations` counts all stages.
    pub fn solve_smoothed<P: Complementarity + ?Sized>(&self, problem: &P, z0: &DVector<f64>) -> Result<SolverResult> {
        let mut z = z0.clone();
        let mut spent = 0;
        for mu in SMOOTHING_PATH {
            let stage = McpSolver::new(SolverConfig {
                fb_smoothing: mu,
                tol: mu.sqrt().max(self.config.tol),
                ..self.config.clone()
            })?;
            let r = stage.solve(problem, &z)?;
            spent += r.iterations;
            if !r.residual_inf.is_finite() {
                break;
            }
            z = r.z;
        }
        let mut result = self.solve(problem, &z)?;
        result.iterations += spent;
        Ok(result)
    }
}

fn levenberg_direction(
    jphi: &DMatrix<f64>,
    grad: &DVector<f64>,
    initial_shift: f64,
    cfg: &SolverConfig,
) -> Option<DVector<f64>> {
    let normal = jphi.transpose() * jphi;
    let mut shift = initial_shift * normal.diagonal().amax().max(1.0);
    while shift <= cfg.levenberg_max {
        let mut a = normal.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += shift;
        }
        if let Some(d) = lu_solve(&a, &(-grad)) {
            return Some(d);
        }
        shift *= 10.0;
    }
    None
}

fn finish(
    z: DVector<f64>,
    status: SolverStatus,
    residual_inf: f64,
    iterations: usize,
    trace: Vec<IterationRecord>,
) -> SolverResult {
    SolverResult {
        z,
        status,
        residual_inf,
        iterations,
        trace,
    }
}

/// Solves `problem` from `z0` with `config`.
pub fn solve_mcp<P: Complementarity + ?Sized>(
    problem: &P,
    config: &SolverConfig,
    z0: &DVector<f64>,
) -> Result<SolverResult> {
    McpSolver::new(config.clone())?.solve(problem, z0)
}

/// Writes `iteration,residual_inf,step_length` rows.
pub fn write_trace_csv<W: Write>(trace: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "residual_inf", "step_length"])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            format!("{:e}", r.residual_inf),
            format!("{:e}", r.step_length),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcp_2x2() -> LinearComplementarity {
        LinearComplementarity::lcp(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
        )
    }

    fn tight() -> SolverConfig {
        SolverConfig {
            tol: 1e-12,
            ..SolverConfig::default()
        }
    }

    fn assert_monotone(trace: &[IterationRecord]) {
        for w in trace.windows(2) {
            assert!(w[1].merit <= w[0].merit, "merit increased: {:?}", w);
        }
    }

    #[test]
    fn fb_values() {
        assert!(fischer_burmeister(0.0, 0.0).abs() <= FB_SMOOTHING.sqrt());
        assert_eq!(fischer_burmeister_smoothed(3.0, 4.0, 0.0), 2.0);
        assert_eq!(fischer_burmeister_smoothed(-2.0, 0.0, 0.0), -4.0);
        assert!((fischer_burmeister(3.0, 4.0) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn fb_residual_of_free_problem_is_f() {
        let p = LinearComplementarity::with_bounds(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, -3.0]),
            DVector::from_element(2, f64::NEG_INFINITY),
        );
        let z = DVector::from_vec(vec![0.5, 0.25]);
        assert_eq!(fb_residual(&p, &z), p.residual(&z));
    }

    #[test]
    fn fb_residual_at_complementary_points() {
        let p = LinearComplementarity::lcp(DMatrix::identity(1, 1), DVector::from_element(1, -1.0));
        assert!(fb_residual(&p, &DVector::from_element(1, 1.0))[0].abs() < 1e-10);
        let z = DVector::from_element(2, 1.0 / 3.0);
        assert!(fb_residual(&lcp_2x2(), &z).amax() < 1e-12 + FB_SMOOTHING.sqrt());
        assert!(lcp_2x2().residual(&z).amax() < 1e-12);
    }

    #[test]
    fn boundary_solution() {
        let p = LinearComplementarity::lcp(DMatrix::identity(1, 1), DVector::from_element(1, 1.0));
        let r = solve_mcp(&p, &tight(), &DVector::from_element(1, 5.0)).unwrap();
        assert!(r.converged());
        assert!(r.z[0].abs() < 1e-10);
        assert!(p.residual(&r.z)[0] > 0.99);
        assert_monotone(&r.trace);
    }

    #[test]
    fn interior_lcp() {
        let r = solve_mcp(&lcp_2x2(), &tight(), &DVector::from_element(2, 1.0)).unwrap();
        assert!(r.converged());
        for v in r.z.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-10);
        }
        assert_monotone(&r.trace);
    }

    #[test]
    fn smoothing_continuation_reaches_the_same_solution() {
        let solver = McpSolver::new(tight()).unwrap();
        let r = solver.solve_smoothed(&lcp_2x2(), &DVector::zeros(2)).unwrap();
        assert!(r.converged());
        assert!((r.z[0] - 1.0 / 3.0).abs() < 1e-10 && (r.z[1] - 1.0 / 3.0).abs() < 1e-10);
        assert!(r.iterations >= r.trace.len() - 1);
    }

    struct NoRoot {
        lower: DVector<f64>,
    }

    impl Complementarity for NoRoot {
        fn dim(&self) -> usize {
            1
        }
        fn lower_bounds(&self) -> &DVector<f64> {
            &self.lower
        }
        fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, z[0] * z[0] + 1.0)
        }
        fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, 2.0 * z[0])
        }
    }

    #[test]
    fn unsolvable_problem_reports_failure() {
        let r = solve_mcp(&NoRoot { lower: DVector::from_element(1, f64::NEG_INFINITY) }, &SolverConfig::default(), &DVector::from_element(1, 3.0)).unwrap();
        assert!(!r.converged());
        assert!(r.residual_inf >= 1.0 - 1e-9);
        assert!(r.iterations < 200);
        assert_monotone(&r.trace);
    }

    #[test]
    fn negative_start_is_clamped() {
        let p = LinearComplementarity::lcp(DMatrix::identity(1, 1), DVector::from_element(1, -1.0));
        let r = solve_mcp(&p, &tight(), &DVector::from_element(1, -4.0)).unwrap();
        assert!(r.converged());
        assert!((r.z[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn singular_jacobian_falls_back_to_levenberg() {
        // F(z) = (z0 + z1 - 1, z0 + z1 - 1) is rank one; any point on the line solves it.
        let p = LinearComplementarity::with_bounds(
            DMatrix::from_element(2, 2, 1.0),
            DVector::from_element(2, -1.0),
            DVector::from_element(2, f64::NEG_INFINITY),
        );
        let r = solve_mcp(&p, &SolverConfig::default(), &DVector::zeros(2)).unwrap();
        assert!(r.converged(), "{:?}", r.status);
        assert!((r.z[0] + r.z[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_lcp_does_not_converge() {
        // z >= 0, F = -1 - z < 0 everywhere: no solution.
        let p = LinearComplementarity::lcp(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, -1.0));
        let r = solve_mcp(&p, &SolverConfig { max_iter: 50, ..SolverConfig::default() }, &DVector::zeros(1)).unwrap();
        assert!(!r.converged());
        assert_monotone(&r.trace);
    }

    #[test]
    fn identical_inputs_give_identical_traces() {
        let a = solve_mcp(&lcp_2x2(), &SolverConfig::default(), &DVector::from_vec(vec![3.0, -1.0])).unwrap();
        let b = solve_mcp(&lcp_2x2(), &SolverConfig::default(), &DVector::from_vec(vec![3.0, -1.0])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn status_matches_residual() {
        let r = solve_mcp(&lcp_2x2(), &SolverConfig::default(), &DVector::zeros(2)).unwrap();
        assert_eq!(r.converged(), r.residual_inf <= 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { backtrack: 1.0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { tol: 0.0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn trace_csv_has_stable_header() {
        let r = solve_mcp(&lcp_2x2(), &SolverConfig::default(), &DVector::zeros(2)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&r.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,residual_inf,step_length"));
        assert_eq!(lines.count(), r.trace.len());
    }
}
