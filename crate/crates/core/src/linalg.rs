//! Dense symmetric eigensolver shared by the chain and steady-state modules.

use faer::{Mat, Side};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn check_square_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::param(format!(
            "{what}: matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(bad) = m.iter().find(|x| !x.is_finite()) {
        return Err(Error::numerical(format!("{what}: non-finite entry {bad}")));
    }
    Ok(())
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
/// Column `k` of the returned matrix is the eigenvector of eigenvalue `k`.
/// Only the lower triangle is read.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_square_finite(m, "symmetric_eigen")?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let evd = to_faer(m).self_adjoint_eigen(Side::Lower).map_err(|e| {
        Error::numerical(format!(
            "eigensolver did not converge on {n}x{n} matrix (max |entry| {:.3e}): {e:?}",
            m.amax()
        ))
    })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let values = order.iter().map(|&k| s[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok((values, vectors))
}

/// Eigenvalues only, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_square_finite(m, "symmetric_eigenvalues")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut values = to_faer(m)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::numerical(format!("eigensolver did not converge: {e:?}")))?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Singular values, descending, plus the right singular vector belonging to the smallest one.
pub fn smallest_right_singular(m: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    check_square_finite(m, "svd")?;
    let svd = to_faer(m)
        .svd()
        .map_err(|e| Error::numerical(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let n = s.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let values = order.iter().map(|&k| s[k]).collect();
    let last = order[n - 1];
    let vector = (0..m.ncols()).map(|i| v[(i, last)]).collect();
    Ok((values, vector))
}
