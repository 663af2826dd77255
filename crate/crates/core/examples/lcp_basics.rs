//! The complementarity solver on its own: linear complementarity problems
//! `0 <= z ⟂ Mz + q >= 0`, plus a free row.

use gnep::mcp::{solve_mcp, Complementarity, LinearComplementarity, SolverConfig};
use gnep::Result;
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> Result<Vec<DVector<f64>>> {
    let cfg = SolverConfig {
        tol: 1e-12,
        ..SolverConfig::default()
    };
    let problems = [
        ("z - 1, lower bound active", LinearComplementarity::lcp(DMatrix::identity(1, 1), DVector::from_element(1, 1.0))),
        ("z - 1 with q = -1, interior", LinearComplementarity::lcp(DMatrix::identity(1, 1), DVector::from_element(1, -1.0))),
        (
            "2x2 symmetric",
            LinearComplementarity::lcp(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]), DVector::from_element(2, -1.0)),
        ),
        (
            "free first row",
            LinearComplementarity::with_bounds(
                DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 2.0]),
                DVector::from_vec(vec![-2.0, 1.0]),
                DVector::from_vec(vec![f64::NEG_INFINITY, 0.0]),
            ),
        ),
    ];
    let mut out = Vec::new();
    for (name, p) in &problems {
        let r = solve_mcp(p, &cfg, &DVector::from_element(p.dim(), 1.0))?;
        println!(
            "{name}: z = {:?}, F(z) = {:?}, {:?} in {} iterations",
            r.z.as_slice(),
            p.residual(&r.z).as_slice(),
            r.status,
            r.iterations
        );
        out.push(r.z);
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
