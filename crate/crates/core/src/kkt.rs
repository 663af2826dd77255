//! Modified KKT system of a scaled-multiplier game, encoded as a mixed
//! complementarity problem.
//!
//! Row blocks of `F(z)` and their complementary variables:
//!
//! | rows                      | paired with       | bound      |
//! |---------------------------|-------------------|------------|
//! | `grad_{x^i} L_i`          | `x^i`             | free       |
//! | `h_i(x^i)`                | `mu_i`            | free       |
//! | `-g_i(x^i)`               | `lambda_i`        | `>= 0`     |
//! | `-s(x)`                   | `sigma` (shared)  | `>= 0`     |

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result};
use crate::game::{stationarity, GameSpec, MultiplierSet, ScalingFactors, StrategyProfile};
use crate::mcp::Complementarity;

/// Block offsets of `z = (x, mu_1..mu_M, lambda_1..lambda_M, sigma)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct McpLayout {
    pub x: Range<usize>,
    pub mu: Vec<Range<usize>>,
    pub lambda: Vec<Range<usize>>,
    pub sigma: Range<usize>,
}

impl McpLayout {
    pub fn for_game(game: &GameSpec) -> Self {
        let n = game.dim();
        let mut next = n;
        let mut take = |len: usize| {
            let r = next..next + len;
            next += len;
            r
        };
        let m = game.num_players();
        let mu: Vec<_> = (0..m).map(|i| take(game.eq_len(i))).collect();
        let lambda: Vec<_> = (0..m).map(|i| take(game.ineq_len(i))).collect();
        let sigma = take(game.shared_len());
        Self {
            x: 0..n,
            mu,
            lambda,
            sigma,
        }
    }

    /// `N_z = n + sum k_i + sum m_i + m0`.
    pub fn len(&self) -> usize {
        self.sigma.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of rows paired with a lower bound of zero.
    pub fn bounded_len(&self) -> usize {
        self.len() - self.lambda.first().map_or(self.sigma.start, |r| r.start)
    }

    pub fn split(&self, z: &DVector<f64>) -> (DVector<f64>, MultiplierSet) {
        let seg = |r: &Range<usize>| z.rows(r.start, r.len()).into_owned();
        (
            seg(&self.x),
            MultiplierSet::raw(
                self.mu.iter().map(seg).collect(),
                self.lambda.iter().map(seg).collect(),
                seg(&self.sigma),
            ),
        )
    }

    pub fn assemble(&self, x: &DVector<f64>, mult: &MultiplierSet) -> DVector<f64> {
        let mut z = DVector::zeros(self.len());
        z.rows_mut(0, x.len()).copy_from(x);
        for (r, v) in self.mu.iter().zip(&mult.mu) {
            z.rows_mut(r.start, r.len()).copy_from(v);
        }
        for (r, v) in self.lambda.iter().zip(&mult.lambda) {
            z.rows_mut(r.start, r.len()).copy_from(v);
        }
        z.rows_mut(self.sigma.start, self.sigma.len()).copy_from(&mult.sigma);
        z
    }
}

/// The modified KKT system as an MCP: find `z` with `l <= z` complementary to `F(z)`.
#[derive(Clone, Debug)]
pub struct McpProblem {
    game: GameSpec,
    factors: ScalingFactors,
    layout: McpLayout,
    lower: DVector<f64>,
}

/// Assembles the MCP for `game` under shared-multiplier weights `factors`.
pub fn build_mcp(game: &GameSpec, factors: &ScalingFactors) -> Result<McpProblem> {
    factors.check_game(game)?;
    let layout = McpLayout::for_game(game);
    let mut lower = DVector::from_element(layout.len(), f64::NEG_INFINITY);
    let bounded_start = layout.len() - layout.bounded_len();
    lower.rows_mut(bounded_start, layout.bounded_len()).fill(0.0);
    Ok(McpProblem {
        game: game.clone(),
        factors: factors.clone(),
        layout,
        lower,
    })
}

impl McpProblem {
    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn factors(&self) -> &ScalingFactors {
        &self.factors
    }

    pub fn layout(&self) -> &McpLayout {
        &self.layout
    }

    /// Upper bounds are `+inf` on every row.
    pub fn upper_bounds(&self) -> DVector<f64> {
        DVector::from_element(self.layout.len(), f64::INFINITY)
    }

    pub fn profile(&self, z: &DVector<f64>) -> StrategyProfile {
        StrategyProfile::new(z.rows(0, self.game.dim()).into_owned(), self.game.dims())
            .expect("layout matches game")
    }

    /// Actual per-player shared multipliers at `z`.
    pub fn player_sigmas(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        let s = &self.layout.sigma;
        let sigma = z.rows(s.start, s.len());
        (0..self.game.num_players())
            .map(|i| self.factors.player(i).component_mul(&sigma))
            .collect()
    }
}

impl Complementarity for McpProblem {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn lower_bounds(&self) -> &DVector<f64> {
        &self.lower
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let (x, mult) = self.layout.split(z);
        let x = x.as_slice();
        let game = &self.game;
        let mut f = DVector::zeros(self.layout.len());
        f.rows_mut(0, game.dim())
            .copy_from(&stationarity(game, &self.factors, x, &mult));
        for i in 0..game.num_players() {
            let own = &x[game.block(i)];
            let p = game.player(i);
            let r = &self.layout.mu[i];
            if !r.is_empty() {
                f.rows_mut(r.start, r.len()).copy_from(&p.eq.value(own));
            }
            let r = &self.layout.lambda[i];
            if !r.is_empty() {
                f.rows_mut(r.start, r.len()).copy_from(&(-p.ineq.value(own)));
            }
        }
        let r = &self.layout.sigma;
        if !r.is_empty() {
            f.rows_mut(r.start, r.len())
                .copy_from(&(-game.shared().value(x)));
        }
        f
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let (x, mult) = self.layout.split(z);
        let x = x.as_slice();
        let game = &self.game;
        let n = game.dim();
        let nz = self.layout.len();
        let mut jac = DMatrix::zeros(nz, nz);
        let m0 = game.shared_len();
        let shared_jac = (m0 > 0).then(|| game.shared().jacobian(x));
        let sig = &self.layout.sigma;

        for i in 0..game.num_players() {
            let p = game.player(i);
            let b = game.block(i);
            let own = &x[b.clone()];
            let ni = b.len();

            // d(stationarity_i)/dx
            let mut h = p.cost.partial_hessian(x, b.clone());
            if !p.eq.is_empty() {
                let jh = p.eq.jacobian(own);
                let hh = p.eq.weighted_hessian(own, mult.mu[i].as_slice());
                let mut own_block = h.view_mut((0, b.start), (ni, ni));
                own_block += &hh;
                let r = &self.layout.mu[i];
                jac.view_mut((b.start, r.start), (ni, r.len()))
                    .copy_from(&jh.transpose());
                jac.view_mut((r.start, b.start), (r.len(), ni)).copy_from(&jh);
            }
            if !p.ineq.is_empty() {
                let jg = p.ineq.jacobian(own);
                let hg = p.ineq.weighted_hessian(own, mult.lambda[i].as_slice());
                let mut own_block = h.view_mut((0, b.start), (ni, ni));
                own_block += &hg;
                let r = &self.layout.lambda[i];
                jac.view_mut((b.start, r.start), (ni, r.len()))
                    .copy_from(&jg.transpose());
                jac.view_mut((r.start, b.start), (r.len(), ni)).copy_from(&(-jg));
            }
            if let Some(js) = &shared_jac {
                let w = self.factors.player(i).component_mul(&mult.sigma);
                let hs = game.shared().weighted_hessian(x, w.as_slice());
                h += hs.rows(b.start, ni);
                // d/dsigma of J_s[:, b]' (a_i ⊙ sigma) = J_s[:, b]' diag(a_i)
                let mut cols = js.columns(b.start, ni).transpose();
                for (c, a) in self.factors.player(i).iter().enumerate() {
                    cols.column_mut(c).scale_mut(*a);
                }
                jac.view_mut((b.start, sig.start), (ni, m0)).copy_from(&cols);
            }
            jac.view_mut((b.start, 0), (ni, n)).copy_from(&h);
        }
        if let Some(js) = &shared_jac {
            jac.view_mut((sig.start, 0), (m0, n)).copy_from(&(-js));
        }
        jac
    }
}

/// Infinity norms of the three KKT residual families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.complementarity)
    }

    pub fn is_kkt_point(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// KKT residual of `z` for the game under `factors`.
pub fn kkt_residual(game: &GameSpec, factors: &ScalingFactors, z: &DVector<f64>) -> Result<KktResidual> {
    factors.check_game(game)?;
    let layout = McpLayout::for_game(game);
    check_len("MCP point", layout.len(), z.len())?;
    let (x, mult) = layout.split(z);
    let x = x.as_slice();
    let stat = stationarity(game, factors, x, &mult);

    let mut equality: f64 = 0.0;
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut pair = |multiplier: f64, c: f64| {
        primal = primal.max(c.max(0.0));
        comp = comp.max(multiplier.min(-c).abs());
    };
    for i in 0..game.num_players() {
        let own = &x[game.block(i)];
        let p = game.player(i);
        for h in p.eq.value(own).iter() {
            equality = equality.max(h.abs());
        }
        for (l, g) in mult.lambda[i].iter().zip(p.ineq.value(own).iter()) {
            pair(*l, *g);
        }
    }
    for (s, c) in mult.sigma.iter().zip(game.shared().value(x).iter()) {
        pair(*s, *c);
    }
    Ok(KktResidual {
        stationarity: stat.amax(),
        primal_feasibility: primal.max(equality),
        complementarity: comp,
    })
}

/// Max relative deviation between `J_F` and central differences of `F` at `z`.
pub fn jacobian_fd_deviation(problem: &McpProblem, z: &DVector<f64>) -> f64 {
    let analytic = problem.jacobian(z);
    let step = crate::eval::FD_STEP;
    let mut fd = DMatrix::zeros(z.len(), z.len());
    let mut zp = z.clone();
    for j in 0..z.len() {
        let orig = zp[j];
        zp[j] = orig + step;
        let fp = problem.residual(&zp);
        zp[j] = orig - step;
        let fm = problem.residual(&zp);
        zp[j] = orig;
        fd.set_column(j, &((fp - fm) / (2.0 * step)));
    }
    crate::eval::max_relative_deviation(&analytic, &fd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ScalarFn, VectorFn};
    use crate::game::Player;

    fn coupled_game() -> GameSpec {
        // Two players, private bound x_i <= 2, shared x_0 * x_1 <= 1 (nonlinear).
        let cost = |i: usize| {
            ScalarFn::new(move |x: &[f64]| (x[i] - 3.0).powi(2) + 0.5 * x[0] * x[1]).with_gradient(move |x| {
                let mut g = DVector::from_vec(vec![0.5 * x[1], 0.5 * x[0]]);
                g[i] += 2.0 * (x[i] - 3.0);
                g
            })
        };
        let bound = VectorFn::new(1, |x| DVector::from_element(1, x[0] - 2.0));
        let shared = VectorFn::new(1, |x| DVector::from_element(1, x[0] * x[1] - 1.0));
        GameSpec::new(
            vec![
                Player::new(1, cost(0)).with_ineq(bound.clone()),
                Player::new(1, cost(1))
                    .with_ineq(bound)
                    .with_eq(VectorFn::new(1, |x| DVector::from_element(1, x[0] * x[0] - 1.0))),
            ],
            shared,
        )
        .unwrap()
    }

    #[test]
    fn layout_counts_and_bounds() {
        let game = coupled_game();
        let p = build_mcp(&game, &ScalingFactors::uniform(2, 1)).unwrap();
        let l = p.layout();
        assert_eq!(l.len(), 2 + 1 + 2 + 1);
        assert_eq!(l.bounded_len(), 3);
        let lower = p.lower_bounds();
        assert!(lower.rows(0, 3).iter().all(|v| *v == f64::NEG_INFINITY));
        assert!(lower.rows(3, 3).iter().all(|v| *v == 0.0));
        assert!(p.upper_bounds().iter().all(|v| *v == f64::INFINITY));
    }

    #[test]
    fn no_shared_constraints_means_no_sigma_block() {
        let game = GameSpec::new(
            vec![Player::new(1, ScalarFn::new(|x| x[0] * x[0])), Player::new(2, ScalarFn::new(|x| x[1] + x[2] * x[2]))],
            VectorFn::empty(),
        )
        .unwrap();
        let p = build_mcp(&game, &ScalingFactors::uniform(2, 0)).unwrap();
        assert!(p.layout().sigma.is_empty());
        assert_eq!(p.dim(), 3);
        let z = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((p.residual(&z) - DVector::from_vec(vec![2.0, 1.0, 6.0])).amax() < 1e-6);
    }

    #[test]
    fn factor_length_mismatch_is_rejected() {
        let game = coupled_game();
        assert!(build_mcp(&game, &ScalingFactors::uniform(2, 2)).is_err());
        assert!(build_mcp(&game, &ScalingFactors::uniform(3, 1)).is_err());
    }

    #[test]
    fn split_assemble_roundtrip() {
        let game = coupled_game();
        let l = McpLayout::for_game(&game);
        let z = DVector::from_fn(l.len(), |i, _| i as f64 * 0.5 - 1.0);
        let (x, m) = l.split(&z);
        assert_eq!(l.assemble(&x, &m), z);
    }

    #[test]
    fn fd_jacobian_agrees_with_fd_based_assembly() {
        let game = coupled_game();
        let p = build_mcp(&game, &ScalingFactors::from_scalars(&[1.0, 2.5], 1).unwrap()).unwrap();
        let z = DVector::from_vec(vec![0.7, -0.3, 0.4, 0.2, 0.1, 0.9]);
        let dev = jacobian_fd_deviation(&p, &z);
        assert!(dev < 1e-4, "{dev}");
    }

    #[test]
    fn residual_at_origin_is_cost_gradient() {
        let game = coupled_game();
        let f = ScalingFactors::uniform(2, 1);
        let r = kkt_residual(&game, &f, &DVector::zeros(6)).unwrap();
        assert!((r.stationarity - 6.0).abs() < 1e-6);
        assert!(r.primal_feasibility >= 1.0 - 1e-12);
    }
}
