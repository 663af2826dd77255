//! Collocation encoding of the two-car racing game.
//!
//! Each car decides its inputs `u_0..u_{N-1}` and states `x_1..x_N`, stored
//! stage by stage as `[u_0, x_1, u_1, x_2, ...]` (8 entries per stage). The
//! dynamics enter as equality defects, speed/lateral/input limits as private
//! inequalities and collision avoidance as shared inequalities on the knots
//! `k = 1..N-1`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_dual::{Dual64, HyperDual64};
use serde::{Deserialize, Serialize};

use super::dynamics::{bicycle_step, step_generic, VehicleInput, VehicleState, INPUT_DIM, STATE_DIM};
use super::track::Track;
use super::RacingConfig;
use crate::error::{GnepError, Result};
use crate::eval::{ScalarFn, VectorFn};
use crate::game::{GameSpec, Player, ScalingFactors};
use crate::kkt::{build_mcp, McpLayout, McpProblem};

const STAGE: usize = STATE_DIM + INPUT_DIM;

/// Index arithmetic for one car's decision block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RacingLayout {
    pub horizon: usize,
}

impl RacingLayout {
    pub fn dim(&self) -> usize {
        STAGE * self.horizon
    }

    /// Offset of `u_k`, `k in 0..N`.
    pub fn input(&self, k: usize) -> usize {
        debug_assert!(k < self.horizon);
        STAGE * k
    }

    /// Offset of `x_k`, `k in 1..=N`.
    pub fn state(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.horizon);
        STAGE * (k - 1) + INPUT_DIM
    }

    pub fn eq_len(&self) -> usize {
        STATE_DIM * self.horizon
    }

    /// Speed and lateral bounds per knot plus input boxes per stage.
    pub fn ineq_len(&self) -> usize {
        8 * self.horizon
    }

    /// Collision-avoidance rows for `k = 1..N-1`.
    pub fn shared_len(&self) -> usize {
        self.horizon - 1
    }
}

/// The racing game together with the data needed to interpret its solutions.
#[derive(Clone, Debug)]
pub struct RacingGame {
    pub track: Arc<Track>,
    pub cfg: RacingConfig,
    pub initial: [VehicleState; 2],
    pub game: GameSpec,
    pub factors: ScalingFactors,
}

/// Builds the game for two cars starting at `x1_0` (leader) and `x2_0`.
///
/// Player 0 weights the shared multipliers by 1, player 1 by `cfg.alpha`.
pub fn build_racing_game(
    track: &Track,
    cfg: &RacingConfig,
    x1_0: VehicleState,
    x2_0: VehicleState,
) -> Result<RacingGame> {
    cfg.validate()?;
    let distance = x1_0.distance(&x2_0);
    if distance < cfg.d_safe {
        return Err(GnepError::InitialCollision {
            distance,
            d_safe: cfg.d_safe,
        });
    }
    let layout = RacingLayout { horizon: cfg.horizon };
    let track = Arc::new(track.clone());
    let initial = [x1_0, x2_0];
    let players = (0..2)
        .map(|p| {
            Player::new(layout.dim(), cost(layout, cfg.beta, p))
                .with_eq(dynamics_defects(layout, track.clone(), cfg, initial[p]))
                .with_ineq(limits(layout, cfg, cfg.v_max[p], cfg.lateral_limit(&track)))
        })
        .collect();
    let game = GameSpec::new(players, collision_avoidance(layout, cfg.d_safe))?;
    let factors = ScalingFactors::from_scalars(&[1.0, cfg.alpha], layout.shared_len())?;
    Ok(RacingGame {
        track,
        cfg: cfg.clone(),
        initial,
        game,
        factors,
    })
}

fn cost(layout: RacingLayout, beta: f64, player: usize) -> ScalarFn {
    let n = 2 * layout.dim();
    let own = player * layout.dim();
    let other = (1 - player) * layout.dim();
    let s_final = layout.state(layout.horizon) + 2;
    let inputs: Vec<usize> = (0..layout.horizon)
        .flat_map(|k| [own + layout.input(k), own + layout.input(k) + 1])
        .collect();
    let inputs_g = inputs.clone();
    let inputs_h = inputs.clone();
    ScalarFn::new(move |x| {
        let effort: f64 = inputs.iter().map(|&i| x[i] * x[i]).sum();
        -x[own + s_final] + x[other + s_final] + 0.5 * beta * effort
    })
    .with_gradient(move |x| {
        let mut g = DVector::zeros(n);
        for &i in &inputs_g {
            g[i] = beta * x[i];
        }
        g[own + s_final] = -1.0;
        g[other + s_final] = 1.0;
        g
    })
    .with_hessian(move |_| {
        let mut h = DMatrix::zeros(n, n);
        for &i in &inputs_h {
            h[(i, i)] = beta;
        }
        h
    })
}

/// Stage variables `(x_k, u_k)` as one 8-vector; `x_0` comes from the initial state.
fn stage_inputs(layout: RacingLayout, x: &[f64], initial: &VehicleState, k: usize) -> [f64; STAGE] {
    let mut z = [0.0; STAGE];
    if k == 0 {
        z[..STATE_DIM].copy_from_slice(&initial.to_array());
    } else {
        let o = layout.state(k);
        z[..STATE_DIM].copy_from_slice(&x[o..o + STATE_DIM]);
    }
    let o = layout.input(k);
    z[STATE_DIM..].copy_from_slice(&x[o..o + INPUT_DIM]);
    z
}

fn stage_step<D: super::track::Scalar>(z: &[D; STAGE], track: &Track, cfg: &RacingConfig) -> [D; STATE_DIM] {
    let x: [D; STATE_DIM] = z[..STATE_DIM].try_into().unwrap();
    let u: [D; INPUT_DIM] = z[STATE_DIM..].try_into().unwrap();
    step_generic(&x, &u, track, cfg.dt, cfg.wheelbase)
}

/// Jacobian (6 x 8) of one stage by forward-mode differentiation.
fn stage_jacobian(z: &[f64; STAGE], track: &Track, cfg: &RacingConfig) -> [[f64; STAGE]; STATE_DIM] {
    let mut jac = [[0.0; STAGE]; STATE_DIM];
    for j in 0..STAGE {
        let zd: [Dual64; STAGE] =
            std::array::from_fn(|i| Dual64::new(z[i], if i == j { 1.0 } else { 0.0 }));
        let out = stage_step(&zd, track, cfg);
        for r in 0..STATE_DIM {
            jac[r][j] = out[r].eps;
        }
    }
    jac
}

/// `sum_r w_r Hess f_r` (8 x 8) of one stage with hyper-dual numbers.
fn stage_weighted_hessian(
    z: &[f64; STAGE],
    w: &[f64],
    track: &Track,
    cfg: &RacingConfig,
) -> [[f64; STAGE]; STAGE] {
    let mut h = [[0.0; STAGE]; STAGE];
    for i in 0..STAGE {
        for j in i..STAGE {
            let zd: [HyperDual64; STAGE] = std::array::from_fn(|m| {
                HyperDual64::new(
                    z[m],
                    if m == i { 1.0 } else { 0.0 },
                    if m == j { 1.0 } else { 0.0 },
                    0.0,
                )
            });
            let out = stage_step(&zd, track, cfg);
            let v: f64 = (0..STATE_DIM).map(|r| w[r] * out[r].eps1eps2).sum();
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    h
}

fn dynamics_defects(layout: RacingLayout, track: Arc<Track>, cfg: &RacingConfig, initial: VehicleState) -> VectorFn {
    let n = layout.dim();
    let (t_val, t_jac, t_hess) = (track.clone(), track.clone(), track);
    let (c_val, c_jac, c_hess) = (cfg.clone(), cfg.clone(), cfg.clone());
    VectorFn::new(layout.eq_len(), move |x| {
        let mut out = DVector::zeros(layout.eq_len());
        for k in 0..layout.horizon {
            let z = stage_inputs(layout, x, &initial, k);
            let next = stage_step(&z, &t_val, &c_val);
            let o = layout.state(k + 1);
            for r in 0..STATE_DIM {
                out[STATE_DIM * k + r] = x[o + r] - next[r];
            }
        }
        out
    })
    .with_jacobian(move |x| {
        let mut jac = DMatrix::zeros(layout.eq_len(), n);
        for k in 0..layout.horizon {
            let z = stage_inputs(layout, x, &initial, k);
            let sj = stage_jacobian(&z, &t_jac, &c_jac);
            let row = STATE_DIM * k;
            let next = layout.state(k + 1);
            let u = layout.input(k);
            for r in 0..STATE_DIM {
                jac[(row + r, next + r)] = 1.0;
                for c in 0..INPUT_DIM {
                    jac[(row + r, u + c)] = -sj[r][STATE_DIM + c];
                }
                if k > 0 {
                    let xs = layout.state(k);
                    for c in 0..STATE_DIM {
                        jac[(row + r, xs + c)] = -sj[r][c];
                    }
                }
            }
        }
        jac
    })
    .with_weighted_hessian(move |x, w| {
        let mut hess = DMatrix::zeros(n, n);
        for k in 0..layout.horizon {
            let wk = &w[STATE_DIM * k..STATE_DIM * (k + 1)];
            if wk.iter().all(|v| *v == 0.0) {
                continue;
            }
            let z = stage_inputs(layout, x, &initial, k);
            let sh = stage_weighted_hessian(&z, wk, &t_hess, &c_hess);
            // Column index of each stage variable inside the block, if it is a decision variable.
            let index = |m: usize| -> Option<usize> {
                if m < STATE_DIM {
                    (k > 0).then(|| layout.state(k) + m)
                } else {
                    Some(layout.input(k) + m - STATE_DIM)
                }
            };
            for a in 0..STAGE {
                let Some(ia) = index(a) else { continue };
                for b in 0..STAGE {
                    let Some(ib) = index(b) else { continue };
                    hess[(ia, ib)] -= sh[a][b];
                }
            }
        }
        hess
    })
}

fn limits(layout: RacingLayout, cfg: &RacingConfig, v_max: f64, t_max: f64) -> VectorFn {
    let m = layout.ineq_len();
    let mut a = DMatrix::zeros(m, layout.dim());
    let mut b = DVector::zeros(m);
    let mut row = 0;
    let mut push = |col: usize, sign: f64, bound: f64| {
        a[(row, col)] = sign;
        b[row] = bound;
        row += 1;
    };
    for k in 1..=layout.horizon {
        let o = layout.state(k);
        push(o, 1.0, -v_max);
        push(o, -1.0, cfg.v_min);
        push(o + 3, 1.0, -t_max);
        push(o + 3, -1.0, -t_max);
    }
    for k in 0..layout.horizon {
        let o = layout.input(k);
        push(o, 1.0, -cfg.accel_max);
        push(o, -1.0, -cfg.accel_max);
        push(o + 1, 1.0, -cfg.steer_max);
        push(o + 1, -1.0, -cfg.steer_max);
    }
    VectorFn::affine(a, b)
}

/// `d_safe^2 - |p^1_k - p^2_k|^2 <= 0` for `k = 1..N-1`.
fn collision_avoidance(layout: RacingLayout, d_safe: f64) -> VectorFn {
    let m = layout.shared_len();
    let n = 2 * layout.dim();
    let offset = layout.dim();
    let pos = move |k: usize| layout.state(k) + 4;
    let d2 = d_safe * d_safe;
    VectorFn::new(m, move |x| {
        DVector::from_fn(m, |r, _| {
            let p = pos(r + 1);
            let dx = x[p] - x[offset + p];
            let dy = x[p + 1] - x[offset + p + 1];
            d2 - dx * dx - dy * dy
        })
    })
    .with_jacobian(move |x| {
        let mut jac = DMatrix::zeros(m, n);
        for r in 0..m {
            let p = pos(r + 1);
            let dx = x[p] - x[offset + p];
            let dy = x[p + 1] - x[offset + p + 1];
            jac[(r, p)] = -2.0 * dx;
            jac[(r, p + 1)] = -2.0 * dy;
            jac[(r, offset + p)] = 2.0 * dx;
            jac[(r, offset + p + 1)] = 2.0 * dy;
        }
        jac
    })
    .with_weighted_hessian(move |_, w| {
        let mut h = DMatrix::zeros(n, n);
        for (r, &wr) in w.iter().enumerate() {
            let p = pos(r + 1);
            for c in 0..2 {
                let (i, j) = (p + c, offset + p + c);
                h[(i, i)] -= 2.0 * wr;
                h[(j, j)] -= 2.0 * wr;
                h[(i, j)] += 2.0 * wr;
                h[(j, i)] += 2.0 * wr;
            }
        }
        h
    })
}

impl RacingGame {
    pub fn layout(&self) -> RacingLayout {
        RacingLayout {
            horizon: self.cfg.horizon,
        }
    }

    /// Same cars and track with player 1's shared weight set to `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut cfg = self.cfg.clone();
        cfg.alpha = alpha;
        cfg.validate()?;
        Ok(Self {
            factors: ScalingFactors::from_scalars(&[1.0, alpha], self.layout().shared_len())?,
            cfg,
            ..self.clone()
        })
    }

    pub fn mcp(&self) -> Result<McpProblem> {
        build_mcp(&self.game, &self.factors)
    }

    /// Knot states `x_0..x_N` of `player` from a stacked profile (or MCP point).
    pub fn states(&self, x: &[f64], player: usize) -> Vec<VehicleState> {
        let layout = self.layout();
        let base = player * layout.dim();
        std::iter::once(self.initial[player])
            .chain((1..=layout.horizon).map(|k| {
                let o = base + layout.state(k);
                VehicleState::from_slice(&x[o..o + STATE_DIM])
            }))
            .collect()
    }

    pub fn inputs(&self, x: &[f64], player: usize) -> Vec<VehicleInput> {
        let layout = self.layout();
        let base = player * layout.dim();
        (0..layout.horizon)
            .map(|k| {
                let o = base + layout.input(k);
                VehicleInput {
                    accel: x[o],
                    steer: x[o + 1],
                }
            })
            .collect()
    }

    /// Largest dynamics defect of either car.
    pub fn max_defect(&self, x: &[f64]) -> f64 {
        (0..2)
            .map(|p| {
                let own = &x[self.game.block(p)];
                self.game.player(p).eq.value(own).amax()
            })
            .fold(0.0, f64::max)
    }

    /// Smallest inter-car distance over the constrained knots `1..N-1`.
    pub fn min_distance(&self, x: &[f64]) -> f64 {
        let a = self.states(x, 0);
        let b = self.states(x, 1);
        (1..self.cfg.horizon)
            .map(|k| a[k].distance(&b[k]))
            .fold(f64::INFINITY, f64::min)
    }

    /// MCP starting point from a simulated rollout; all multipliers zero.
    pub fn initial_guess(&self, mode: GuessMode) -> Result<DVector<f64>> {
        let x = self.rollout(mode)?;
        let layout = McpLayout::for_game(&self.game);
        let mut z = DVector::zeros(layout.len());
        z.rows_mut(0, x.len()).copy_from(&x);
        Ok(z)
    }

    /// Receding-horizon warm start: `z` (a point of this game's layout, usually
    /// the previous plan) advanced by one stage. The last stage repeats its
    /// input and propagates the state through the dynamics.
    pub fn shifted_guess(&self, z: &DVector<f64>) -> DVector<f64> {
        let layout = self.layout();
        let n = layout.horizon;
        let mcp = McpLayout::for_game(&self.game);
        let mut out = z.clone();
        let shift = |out: &mut DVector<f64>, start: usize, stages: usize, width: usize| {
            for k in 0..stages - 1 {
                for r in 0..width {
                    out[start + k * width + r] = z[start + (k + 1) * width + r];
                }
            }
        };
        for p in 0..2 {
            let base = p * layout.dim();
            shift(&mut out, base, n, STAGE);
            let last = VehicleState::from_slice(&z.as_slice()[base + layout.state(n)..base + layout.state(n) + STATE_DIM]);
            let u = base + layout.input(n - 1);
            let input = VehicleInput {
                accel: z[u],
                steer: z[u + 1],
            };
            if let Ok(next) = bicycle_step(&last, &input, &self.track, &self.cfg) {
                let o = base + layout.state(n);
                for (r, v) in next.to_array().iter().enumerate() {
                    out[o + r] = *v;
                }
            }
            shift(&mut out, mcp.mu[p].start, n, STATE_DIM);
            shift(&mut out, mcp.lambda[p].start, n, 4);
            shift(&mut out, mcp.lambda[p].start + 4 * n, n, 4);
        }
        shift(&mut out, mcp.sigma.start, n - 1, 1);
        out
    }

    fn rollout(&self, mode: GuessMode) -> Result<DVector<f64>> {
        let layout = self.layout();
        let bias = 0.75 * self.cfg.lateral_limit(&self.track);
        let targets = match mode {
            GuessMode::FollowCenter => [0.0, 0.0],
            GuessMode::ShiftLeft => [-bias, bias],
            GuessMode::ShiftRight => [bias, -bias],
        };
        let mut x = DVector::zeros(2 * layout.dim());
        for p in 0..2 {
            let base = p * layout.dim();
            let mut state = self.initial[p];
            for k in 0..layout.horizon {
                let input = self.tracking_input(&state, targets[p]);
                state = bicycle_step(&state, &input, &self.track, &self.cfg)?;
                let u = base + layout.input(k);
                x[u] = input.accel;
                x[u + 1] = input.steer;
                let o = base + layout.state(k + 1);
                for (r, v) in state.to_array().iter().enumerate() {
                    x[o + r] = *v;
                }
            }
        }
        Ok(x)
    }

    /// Constant-speed steering law holding the lateral offset near `target`.
    fn tracking_input(&self, state: &VehicleState, target: f64) -> VehicleInput {
        let cfg = &self.cfg;
        let kappa = self.track.curvature_blended(state.s);
        let feedforward = cfg.wheelbase * kappa / (1.0 - kappa * state.t).max(0.1);
        let psi_des = (1.5 * (target - state.t)).clamp(-0.3, 0.3);
        let speed = state.v.max(0.5);
        let correction = 0.5 * cfg.wheelbase / (speed * cfg.dt) * (psi_des - state.psi);
        let steer = (feedforward + correction).atan().clamp(-cfg.steer_max, cfg.steer_max);
        VehicleInput { accel: 0.0, steer }
    }
}

/// Lateral arrangement of the rollout used to seed the solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessMode {
    FollowCenter,
    /// Player 1 biased to the left (+t), player 0 to the right.
    ShiftLeft,
    /// Player 1 biased to the right (-t), player 0 to the left.
    ShiftRight,
}

impl GuessMode {
    pub const ALL: [GuessMode; 3] = [GuessMode::FollowCenter, GuessMode::ShiftLeft, GuessMode::ShiftRight];
}

/// Rollout-based MCP starting point for the game built from `states`.
pub fn rollout_initial_guess(
    track: &Track,
    cfg: &RacingConfig,
    states: &[VehicleState; 2],
    mode: GuessMode,
) -> Result<DVector<f64>> {
    build_racing_game(track, cfg, states[0], states[1])?.initial_guess(mode)
}
