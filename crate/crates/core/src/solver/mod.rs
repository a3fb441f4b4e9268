//! Full sparse direct analysis and decomposed-updating reanalysis.

mod cholesky;
mod dense;
mod dur;

pub use cholesky::{amd_ordering, SparseCholesky, SparseVec};
pub use dense::{DenseCholesky, DenseMatrix};
pub use dur::{detect_unbalanced, dur_solve, embed_previous, DofPartition, DurOutcome, Embedded, ReanalysisState};

use crate::error::SolverError;
use crate::sparse::{norm2, CsrMatrix};

/// Residual-based refinement passes applied after a direct solve.
const REFINE_STEPS: usize = 1;

/// Orders, factors and solves `K U = F`, with one step of iterative refinement.
pub fn full_solve(k: &CsrMatrix, f: &[f64]) -> Result<Vec<f64>, SolverError> {
    full_solve_factored(k, f).map(|(u, _)| u)
}

pub fn full_solve_factored(k: &CsrMatrix, f: &[f64]) -> Result<(Vec<f64>, SparseCholesky), SolverError> {
    if f.len() != k.n() {
        return Err(SolverError::Dimension(format!("K is {0}x{0}, F has {1} entries", k.n(), f.len())));
    }
    let factor = SparseCholesky::factor(k)?;
    let mut u = factor.solve(f);
    for _ in 0..REFINE_STEPS {
        let r: Vec<f64> = k.mul_vec(&u).iter().zip(f).map(|(ku, fi)| fi - ku).collect();
        if norm2(&r) == 0.0 {
            break;
        }
        let du = factor.solve(&r);
        u.iter_mut().zip(du).for_each(|(a, b)| *a += b);
    }
    Ok((u, factor))
}

/// `‖K U − F‖ / ‖F‖`, or the absolute residual when `F = 0`.
pub fn relative_residual(k: &CsrMatrix, u: &[f64], f: &[f64]) -> f64 {
    let r: Vec<f64> = k.mul_vec(u).iter().zip(f).map(|(a, b)| a - b).collect();
    let nf = norm2(f);
    if nf > 0.0 {
        norm2(&r) / nf
    } else {
        norm2(&r)
    }
}
