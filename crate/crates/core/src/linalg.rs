//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) const JITTER: f64 = 1e-10;

/// Cholesky factor of a symmetric positive-definite matrix, retrying once with
/// a small diagonal jitter. The second tuple element reports whether jitter was used.
pub(crate) fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    what: &str,
) -> Result<(Cholesky<f64, nalgebra::Dyn>, bool)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, false));
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    let mut jittered = m.clone();
    for i in 0..m.nrows() {
        jittered[(i, i)] += JITTER * scale;
    }
    match Cholesky::new(jittered) {
        Some(c) => {
            log::warn!("{what}: added diagonal jitter {:e} to obtain a factorization", JITTER * scale);
            Ok((c, true))
        }
        None => Err(Error::Singular(what.to_string())),
    }
}

/// Inverse of a symmetric positive-definite matrix.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, bool)> {
    let (c, jittered) = cholesky_with_jitter(m, what)?;
    let mut inv = c.inverse();
    symmetrize(&mut inv);
    Ok((inv, jittered))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub(crate) fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}
