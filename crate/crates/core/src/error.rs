use thiserror::Error;

/// Errors raised while building games, assembling KKT systems, or running scenarios.
///
/// Non-convergence of the complementarity solver is *not* an error; it is
/// reported through [`crate::mcp::SolverStatus`].
#[derive(Debug, Error)]
pub enum GnepError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("player {player}: {evaluator} evaluator {reason}")]
    Evaluator {
        player: usize,
        evaluator: &'static str,
        reason: String,
    },

    #[error("scaling factor for player {player}, shared row {row} must be strictly positive (got {value})")]
    NonPositiveFactor { player: usize, row: usize, value: f64 },

    #[error("multiplier {name}[{index}] must be nonnegative (got {value})")]
    NegativeMultiplier {
        name: &'static str,
        index: usize,
        value: f64,
    },

    #[error("profile is infeasible: {constraint} violated by {violation:e}")]
    Infeasible { constraint: String, violation: f64 },

    #[error("Frenet singularity at s = {s}, t = {t}: 1 - kappa*t = {margin}")]
    FrenetSingularity { s: f64, t: f64, margin: f64 },

    #[error("initial states collide: distance {distance:.4} m < d_safe {d_safe} m")]
    InitialCollision { distance: f64, d_safe: f64 },

    #[error("no collision-free initial condition after {0} consecutive draws")]
    SamplingExhausted(usize),

    #[error("invalid track: {0}")]
    Track(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GnepError>;

pub(crate) fn check_len(context: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(GnepError::Dimension {
            context: context.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}
