//! Dense linear algebra and random-matrix sampling shared by every module.
//!
//! Vectors are single-column matrices throughout the crate.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Moore-Penrose pseudoinverse computed from the singular value decomposition.
///
/// Singular values below `rel_tol * sigma_max` are treated as zero. Passing
/// `rel_tol = 0.0` selects the conventional numerical-rank cutoff
/// `max(rows, cols) * machine_epsilon`.
pub fn pinv(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    if m.is_empty() {
        return Err(Error::EmptyInput("pinv of an empty matrix".into()));
    }
    if rel_tol < 0.0 || !rel_tol.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "pinv rel_tol must be finite and nonnegative, got {rel_tol}"
        )));
    }
    let (rows, cols) = m.shape();
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(Error::SvdFailed { rows, cols })?;
    let rel_tol = if rel_tol == 0.0 {
        rows.max(cols) as f64 * f64::EPSILON
    } else {
        rel_tol
    };
    let sigma_max = svd.singular_values.max();
    let cutoff = rel_tol * sigma_max;

    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    // pinv = V * S^+ * U^T, built as (S^+ V)^T U^T to keep things column-wise.
    let mut sv = v_t.clone();
    for (i, s) in svd.singular_values.iter().enumerate() {
        let inv = if *s <= cutoff { 0.0 } else { 1.0 / s };
        sv.row_mut(i).scale_mut(inv);
    }
    Ok(sv.transpose() * u.transpose())
}

/// Matrix with independent standard-Gaussian entries, deterministic under a
/// fixed stream (column-major fill order).
pub fn sample_gaussian(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Rows drawn independently from `N(0, S)` where `S` is the symmetric Toeplitz
/// covariance with first row `[1, eps, eps^2, ..., eps^(p-1)]`.
///
/// Realized as `L g` per row with `L L^T = S` applied to standard-Gaussian
/// rows; `eps = 0` therefore reproduces [`sample_gaussian`] exactly.
pub fn sample_toeplitz_rows(rows: usize, p: usize, eps: f64, rng: &mut RngStream) -> Result<Matrix> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "toeplitz correlation must satisfy 0 <= eps < 1, got {eps}"
        )));
    }
    let factor = toeplitz_factor(p, eps)?;
    let draws = sample_gaussian(rows, p, rng);
    // Row i of the output is L * g_i, i.e. draws * L^T.
    Ok(draws * factor.transpose())
}

fn toeplitz_factor(p: usize, eps: f64) -> Result<Matrix> {
    let sigma = Matrix::from_fn(p, p, |i, j| eps.powi((i as i32 - j as i32).abs()));
    spd_factor(sigma)
}

/// Factor `L` with `L L^T = sigma` for a symmetric positive semidefinite
/// matrix. Cholesky when definite; otherwise an eigenvalue factorization with
/// negative eigenvalues clipped to zero, which keeps sampling well defined
/// when `sigma` is only numerically semidefinite.
pub(crate) fn spd_factor(sigma: Matrix) -> Result<Matrix> {
    debug_assert_eq!(sigma.nrows(), sigma.ncols());
    if let Some(chol) = Cholesky::new(sigma.clone()) {
        return Ok(chol.l());
    }
    let eig = SymmetricEigen::new(sigma);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::FactorizationFailed(
            "eigenvalue decomposition produced non-finite values".into(),
        ));
    }
    let mut vecs = eig.eigenvectors;
    for (mut col, lambda) in vecs.column_iter_mut().zip(eig.eigenvalues.iter()) {
        col.scale_mut(lambda.max(0.0).sqrt());
    }
    Ok(vecs)
}

/// Frobenius-relative distance `|a - b|_F / max(1, |a|_F)`.
pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / a.norm().max(1.0)
}
