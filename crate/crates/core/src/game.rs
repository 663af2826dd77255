//! Generalized Nash games with shared constraints and scaled shared multipliers.
//!
//! Player `i` minimizes `J_i(x^i, x^-i)` subject to private equalities
//! `h_i(x^i) = 0`, private inequalities `g_i(x^i) <= 0` and the shared
//! inequalities `s(x) <= 0`. Instead of one multiplier vector per player for
//! `s`, a single fictitious multiplier `sigma` is carried and player `i` sees
//! `sigma_i = a_i ⊙ sigma`, where `a_i` is a strictly positive weight vector.
//! Equal weights give the normalized equilibrium; unequal weights select
//! non-normalized ones.

use std::ops::Range;

use nalgebra::DVector;

use crate::error::{check_len, GnepError, Result};
use crate::eval::{max_relative_deviation, ScalarFn, VectorFn};

/// Feasibility tolerance shared by every constraint check.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// One player's decision block, cost and private constraints.
#[derive(Clone, Debug)]
pub struct Player {
    pub dim: usize,
    /// Cost over the full strategy profile.
    pub cost: ScalarFn,
    /// Private equalities over the player's own variables.
    pub eq: VectorFn,
    /// Private inequalities (`<= 0` feasible) over the player's own variables.
    pub ineq: VectorFn,
    /// Box used by grid-based equilibrium certification.
    pub search_box: Option<Vec<(f64, f64)>>,
}

impl Player {
    pub fn new(dim: usize, cost: ScalarFn) -> Self {
        Self {
            dim,
            cost,
            eq: VectorFn::empty(),
            ineq: VectorFn::empty(),
            search_box: None,
        }
    }

    pub fn with_eq(mut self, eq: VectorFn) -> Self {
        self.eq = eq;
        self
    }

    pub fn with_ineq(mut self, ineq: VectorFn) -> Self {
        self.ineq = ineq;
        self
    }

    pub fn with_search_box(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.search_box = Some(bounds);
        self
    }
}

/// A generalized Nash equilibrium problem.
#[derive(Clone, Debug)]
pub struct GameSpec {
    players: Vec<Player>,
    shared: VectorFn,
    offsets: Vec<usize>,
}

impl GameSpec {
    pub fn new(players: Vec<Player>, shared: VectorFn) -> Result<Self> {
        if players.is_empty() {
            return Err(GnepError::Invalid("a game needs at least one player".into()));
        }
        let mut offsets = Vec::with_capacity(players.len() + 1);
        offsets.push(0);
        for (i, p) in players.iter().enumerate() {
            if p.dim == 0 {
                return Err(GnepError::Invalid(format!(
                    "player {i} has an empty decision vector"
                )));
            }
            if let Some(b) = &p.search_box {
                check_len(&format!("player {i} search box"), p.dim, b.len())?;
            }
            offsets.push(offsets.last().unwrap() + p.dim);
        }
        Ok(Self {
            players,
            shared,
            offsets,
        })
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn player(&self, i: usize) -> &Player {
        &self.players[i]
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    pub fn shared(&self) -> &VectorFn {
        &self.shared
    }

    /// Total decision dimension `n`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.players.iter().map(|p| p.dim).collect()
    }

    /// Index range of player `i` inside the stacked profile.
    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Number of shared constraints `m0`.
    pub fn shared_len(&self) -> usize {
        self.shared.len()
    }

    pub fn eq_len(&self, i: usize) -> usize {
        self.players[i].eq.len()
    }

    pub fn ineq_len(&self, i: usize) -> usize {
        self.players[i].ineq.len()
    }

    pub fn cost(&self, i: usize, x: &[f64]) -> f64 {
        self.players[i].cost.value(x)
    }

    pub fn costs(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_players()).map(|i| self.cost(i, x)).collect()
    }

    /// Evaluates every evaluator at `x` and checks declared lengths and finiteness.
    pub fn validate_at(&self, x: &[f64]) -> Result<()> {
        check_len("strategy profile", self.dim(), x.len())?;
        for (i, p) in self.players.iter().enumerate() {
            let own = &x[self.block(i)];
            let c = p.cost.value(x);
            if !c.is_finite() {
                return Err(evaluator_err(i, "cost", "returned a non-finite value"));
            }
            check_output(i, "equality", p.eq.len(), &p.eq.value(own))?;
            check_output(i, "inequality", p.ineq.len(), &p.ineq.value(own))?;
        }
        let s = self.shared.value(x);
        if s.len() != self.shared.len() || s.iter().any(|v| !v.is_finite()) {
            return Err(GnepError::Invalid(format!(
                "shared constraint evaluator returned {} entries (declared {}) or non-finite values",
                s.len(),
                self.shared.len()
            )));
        }
        Ok(())
    }

    /// Largest constraint violation and a description of where it occurs.
    pub fn max_violation(&self, x: &[f64]) -> (f64, String) {
        let mut worst = (0.0, String::from("none"));
        let mut consider = |v: f64, what: String| {
            if v > worst.0 {
                worst = (v, what);
            }
        };
        for (i, p) in self.players.iter().enumerate() {
            let own = &x[self.block(i)];
            for (j, h) in p.eq.value(own).iter().enumerate() {
                consider(h.abs(), format!("player {i} equality {j}"));
            }
            for (j, g) in p.ineq.value(own).iter().enumerate() {
                consider(*g, format!("player {i} inequality {j}"));
            }
        }
        for (j, s) in self.shared.value(x).iter().enumerate() {
            consider(*s, format!("shared constraint {j}"));
        }
        worst
    }

    /// Fails with [`GnepError::Infeasible`] naming the worst violated constraint.
    pub fn ensure_feasible(&self, x: &[f64], tol: f64) -> Result<()> {
        let (violation, constraint) = self.max_violation(x);
        if violation > tol {
            return Err(GnepError::Infeasible {
                constraint,
                violation,
            });
        }
        Ok(())
    }
}

fn evaluator_err(player: usize, evaluator: &'static str, reason: &str) -> GnepError {
    GnepError::Evaluator {
        player,
        evaluator,
        reason: reason.to_string(),
    }
}

fn check_output(player: usize, what: &'static str, declared: usize, v: &DVector<f64>) -> Result<()> {
    if v.len() != declared {
        return Err(evaluator_err(
            player,
            what,
            &format!("returned {} entries, declared {declared}", v.len()),
        ));
    }
    if v.iter().any(|e| !e.is_finite()) {
        return Err(evaluator_err(player, what, "returned a non-finite value"));
    }
    Ok(())
}

/// Per-player positive weights `a_i` (the diagonal of `A_i`) on the shared multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFactors {
    factors: Vec<DVector<f64>>,
}

impl ScalingFactors {
    pub fn new(factors: Vec<DVector<f64>>) -> Result<Self> {
        let m0 = factors.first().map_or(0, |a| a.len());
        for (i, a) in factors.iter().enumerate() {
            check_len(&format!("scaling factors of player {i}"), m0, a.len())?;
            if let Some((row, &value)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(GnepError::NonPositiveFactor {
                    player: i,
                    row,
                    value,
                });
            }
        }
        Ok(Self { factors })
    }

    /// All-ones weights: the normalized equilibrium.
    pub fn uniform(num_players: usize, shared_len: usize) -> Self {
        Self {
            factors: vec![DVector::from_element(shared_len, 1.0); num_players],
        }
    }

    /// Player `i` weights every shared row by `per_player[i]`.
    pub fn from_scalars(per_player: &[f64], shared_len: usize) -> Result<Self> {
        Self::new(
            per_player
                .iter()
                .map(|&a| DVector::from_element(shared_len, a))
                .collect(),
        )
    }

    pub fn num_players(&self) -> usize {
        self.factors.len()
    }

    pub fn shared_len(&self) -> usize {
        self.factors.first().map_or(0, |a| a.len())
    }

    pub fn player(&self, i: usize) -> &DVector<f64> {
        &self.factors[i]
    }

    /// Divides every weight by `gamma`; pair with multiplying `sigma` by `gamma`.
    pub fn rescaled(&self, gamma: f64) -> Result<Self> {
        Self::new(self.factors.iter().map(|a| a / gamma).collect())
    }

    /// Re-expresses the weights so that player 0 has `A_1 = I`.
    ///
    /// Returns the new weights and the row-wise factor by which `sigma` must be
    /// multiplied to keep every actual multiplier unchanged.
    pub fn relative_to_first(&self) -> (Self, DVector<f64>) {
        let first = self.factors[0].clone();
        let factors = self
            .factors
            .iter()
            .map(|a| a.component_div(&first))
            .collect();
        (Self { factors }, first)
    }

    pub fn is_uniform(&self) -> bool {
        self.factors.windows(2).all(|w| w[0] == w[1])
    }

    pub(crate) fn check_game(&self, game: &GameSpec) -> Result<()> {
        check_len("scaling factor players", game.num_players(), self.num_players())?;
        for (i, a) in self.factors.iter().enumerate() {
            check_len(
                &format!("scaling factors of player {i}"),
                game.shared_len(),
                a.len(),
            )?;
        }
        Ok(())
    }
}

/// Stacked strategy profile `x = [x^1; ...; x^M]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyProfile {
    x: DVector<f64>,
    dims: Vec<usize>,
}

impl StrategyProfile {
    pub fn new(x: DVector<f64>, dims: Vec<usize>) -> Result<Self> {
        check_len("strategy profile", dims.iter().sum(), x.len())?;
        Ok(Self { x, dims })
    }

    pub fn for_game(game: &GameSpec, x: DVector<f64>) -> Result<Self> {
        Self::new(x, game.dims())
    }

    pub fn pack(blocks: &[DVector<f64>]) -> Self {
        let dims: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
        let x = DVector::from_iterator(dims.iter().sum(), blocks.iter().flat_map(|b| b.iter().copied()));
        Self { x, dims }
    }

    pub fn unpack(&self) -> Vec<DVector<f64>> {
        (0..self.dims.len())
            .map(|i| DVector::from_column_slice(self.player(i)))
            .collect()
    }

    pub fn player(&self, i: usize) -> &[f64] {
        let start: usize = self.dims[..i].iter().sum();
        &self.x.as_slice()[start..start + self.dims[i]]
    }

    pub fn as_slice(&self) -> &[f64] {
        self.x.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
}

/// Multipliers `(mu_i, lambda_i, sigma)` with a single shared `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierSet {
    pub mu: Vec<DVector<f64>>,
    pub lambda: Vec<DVector<f64>>,
    pub sigma: DVector<f64>,
}

impl MultiplierSet {
    /// Validated constructor: `lambda >= 0` and `sigma >= 0`.
    pub fn new(mu: Vec<DVector<f64>>, lambda: Vec<DVector<f64>>, sigma: DVector<f64>) -> Result<Self> {
        for l in &lambda {
            if let Some((index, &value)) = l.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(GnepError::NegativeMultiplier {
                    name: "lambda",
                    index,
                    value,
                });
            }
        }
        if let Some((index, &value)) = sigma.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(GnepError::NegativeMultiplier {
                name: "sigma",
                index,
                value,
            });
        }
        Ok(Self { mu, lambda, sigma })
    }

    /// All-zero multipliers sized for `game`.
    pub fn zeros(game: &GameSpec) -> Self {
        let m = game.num_players();
        Self {
            mu: (0..m).map(|i| DVector::zeros(game.eq_len(i))).collect(),
            lambda: (0..m).map(|i| DVector::zeros(game.ineq_len(i))).collect(),
            sigma: DVector::zeros(game.shared_len()),
        }
    }

    /// Unchecked constructor for intermediate solver iterates.
    pub(crate) fn raw(mu: Vec<DVector<f64>>, lambda: Vec<DVector<f64>>, sigma: DVector<f64>) -> Self {
        Self { mu, lambda, sigma }
    }

    pub(crate) fn check_game(&self, game: &GameSpec) -> Result<()> {
        check_len("mu players", game.num_players(), self.mu.len())?;
        check_len("lambda players", game.num_players(), self.lambda.len())?;
        for i in 0..game.num_players() {
            check_len(&format!("mu of player {i}"), game.eq_len(i), self.mu[i].len())?;
            check_len(&format!("lambda of player {i}"), game.ineq_len(i), self.lambda[i].len())?;
        }
        check_len("sigma", game.shared_len(), self.sigma.len())
    }
}

/// Actual per-player shared multipliers `sigma_i = a_i ⊙ sigma`.
pub fn actual_multipliers(factors: &ScalingFactors, sigma: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    check_len("sigma", factors.shared_len(), sigma.len())?;
    if let Some((index, &value)) = sigma.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(GnepError::NegativeMultiplier {
            name: "sigma",
            index,
            value,
        });
    }
    Ok(factors
        .factors
        .iter()
        .map(|a| a.component_mul(sigma))
        .collect())
}

/// Stacked `grad_{x^i} L_i` with `L_i = J_i + mu_i'h_i + lambda_i'g_i + (a_i ⊙ sigma)'s`.
pub fn lagrangian_gradient(
    game: &GameSpec,
    factors: &ScalingFactors,
    x: &StrategyProfile,
    mult: &MultiplierSet,
) -> Result<DVector<f64>> {
    factors.check_game(game)?;
    mult.check_game(game)?;
    check_len("strategy profile", game.dim(), x.as_slice().len())?;
    Ok(stationarity(game, factors, x.as_slice(), mult))
}

/// Unchecked stationarity rows; shared with the KKT assembly.
pub(crate) fn stationarity(
    game: &GameSpec,
    factors: &ScalingFactors,
    x: &[f64],
    mult: &MultiplierSet,
) -> DVector<f64> {
    let mut out = DVector::zeros(game.dim());
    let shared_jac = if game.shared_len() > 0 {
        Some(game.shared().jacobian(x))
    } else {
        None
    };
    for (i, p) in game.players().iter().enumerate() {
        let block = game.block(i);
        let own = &x[block.clone()];
        let mut g = p.cost.partial_gradient(x, block.clone());
        if !p.eq.is_empty() {
            g += p.eq.jacobian(own).tr_mul(&mult.mu[i]);
        }
        if !p.ineq.is_empty() {
            g += p.ineq.jacobian(own).tr_mul(&mult.lambda[i]);
        }
        if let Some(js) = &shared_jac {
            let w = factors.player(i).component_mul(&mult.sigma);
            g += js.columns(block.start, block.len()).tr_mul(&w);
        }
        out.rows_mut(block.start, block.len()).copy_from(&g);
    }
    out
}

/// One evaluator's derivative check.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeCheck {
    pub evaluator: String,
    pub max_rel_deviation: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DerivativeReport {
    pub checks: Vec<DerivativeCheck>,
}

impl DerivativeReport {
    pub fn max_deviation(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_rel_deviation)
            .fold(0.0, f64::max)
    }
}

/// Compares every analytic gradient and Jacobian against central differences.
///
/// Evaluators without analytic derivatives are skipped.
pub fn finite_diff_check(game: &GameSpec, x: &StrategyProfile) -> DerivativeReport {
    let x = x.as_slice();
    let mut checks = Vec::new();
    for (i, p) in game.players().iter().enumerate() {
        if p.cost.has_gradient() {
            let a = p.cost.gradient(x);
            let r = p.cost.fd_gradient(x, 0..x.len());
            checks.push(DerivativeCheck {
                evaluator: format!("player {i} cost gradient"),
                max_rel_deviation: max_relative_deviation(&a, &r),
            });
        }
        let own = &x[game.block(i)];
        for (name, f) in [("equality", &p.eq), ("inequality", &p.ineq)] {
            if f.has_jacobian() && !f.is_empty() {
                checks.push(DerivativeCheck {
                    evaluator: format!("player {i} {name} jacobian"),
                    max_rel_deviation: max_relative_deviation(&f.jacobian(own), &f.fd_jacobian(own)),
                });
            }
        }
    }
    let s = game.shared();
    if s.has_jacobian() && !s.is_empty() {
        checks.push(DerivativeCheck {
            evaluator: "shared jacobian".into(),
            max_rel_deviation: max_relative_deviation(&s.jacobian(x), &s.fd_jacobian(x)),
        });
    }
    DerivativeReport { checks }
}
