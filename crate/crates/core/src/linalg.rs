//! Small dense linear-algebra helpers shared across modules.

use nalgebra::DMatrix;

use crate::error::Result;

/// Spectral norm of a symmetric matrix: the largest eigenvalue magnitude.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    let spec = crate::graph::sym_eigen_matrix(m)?;
    Ok(spec
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Spectral norm (largest singular value) of a general matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |acc, v| acc.max(*v))
}

/// `(M + Mᵀ) / 2`, exactly symmetric.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Rotates the columns `cols` of `target` inside their span so they are as close
/// as possible (Frobenius) to the same columns of `reference`.
pub fn procrustes_align(target: &mut DMatrix<f64>, reference: &DMatrix<f64>, cols: &[usize]) {
    let n = target.nrows();
    let k = cols.len();
    let a = DMatrix::from_fn(n, k, |r, c| target[(r, cols[c])]);
    let b = DMatrix::from_fn(n, k, |r, c| reference[(r, cols[c])]);
    let svd = (a.transpose() * &b).svd(true, true);
    let (Some(w), Some(zt)) = (svd.u, svd.v_t) else {
        return;
    };
    let rotated = a * (w * zt);
    for (c, &col) in cols.iter().enumerate() {
        target.set_column(col, &rotated.column(c));
    }
}
