//! Generalized Nash equilibria of games with shared constraints, where each
//! player prices the shared constraint with its own scaled copy of a common
//! multiplier. Includes a semismooth Newton MCP solver, a two-car racing game
//! and the sweep, race and Monte Carlo drivers behind the `gnep` binary.
//!
//! Start with the programs in `examples/`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod equilibrium;
pub mod eval;
pub mod game;
pub mod kkt;
pub mod mcp;
pub mod racing;
pub mod scenarios;

pub use error::{GnepError, Result};
