//! Offline centralized least-squares benchmark: the min-norm solution over
//! all tasks' stacked training data, i.e. what one would compute with every
//! dataset available at once.

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix, Vector};
use crate::taskgen::TaskData;

/// Min-norm least-squares solution of the vertically stacked system
/// `[A_1; ...; A_T] w ~ [y_1; ...; y_T]`.
///
/// Computed through the Gram matrix of the smaller side (`A^T A` when the
/// stack is tall, `A A^T` when it is wide), which equals the pseudoinverse
/// solution exactly and stays tractable at `N x p` in the tens of thousands.
/// Rank-deficient Gram matrices fall back to an SVD pseudoinverse.
pub fn offline_ls(tasks: &[TaskData]) -> Result<Vector> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput("least squares over an empty task list".into()));
    }
    let p = tasks[0].regressors.ncols();
    if tasks.iter().any(|t| t.regressors.ncols() != p) {
        return Err(Error::DimensionMismatch(
            "tasks disagree on the model dimension".into(),
        ));
    }
    let total: usize = tasks.iter().map(|t| t.regressors.nrows()).sum();

    if total >= p {
        // w = (A^T A)^+ A^T y, accumulated per task so the stack is never
        // materialized.
        let mut gram = Matrix::zeros(p, p);
        let mut rhs = Vector::zeros(p);
        for t in tasks {
            gram += t.regressors.transpose() * &t.regressors;
            rhs += t.regressors.transpose() * &t.outputs;
        }
        if let Some(chol) = well_conditioned_cholesky(&gram) {
            return Ok(chol.solve(&rhs));
        }
        Ok(matrix::pinv(&gram, 0.0)? * rhs)
    } else {
        // Wide stack: w = A^T (A A^T)^+ y.
        let mut stacked = Matrix::zeros(total, p);
        let mut outputs = Vector::zeros(total);
        let mut row = 0;
        for t in tasks {
            let n = t.regressors.nrows();
            stacked.rows_mut(row, n).copy_from(&t.regressors);
            outputs.rows_mut(row, n).copy_from(&t.outputs);
            row += n;
        }
        let outer = &stacked * stacked.transpose();
        if let Some(chol) = well_conditioned_cholesky(&outer) {
            return Ok(stacked.transpose() * chol.solve(&outputs));
        }
        Ok(stacked.transpose() * (matrix::pinv(&outer, 0.0)? * outputs))
    }
}

/// Cholesky factorization that also rejects numerically rank-deficient
/// matrices: near-zero pivots may survive the factorization by roundoff and
/// would yield a normal-equation solution with arbitrary null-space content
/// instead of the min-norm one.
fn well_conditioned_cholesky(m: &Matrix) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = m.clone().cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.max();
    let min = diag.min();
    if min <= 0.0 || min < 1e-7 * max {
        return None;
    }
    Some(chol)
}
