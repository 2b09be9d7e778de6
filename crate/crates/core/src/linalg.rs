//! Small dense linear-algebra helpers shared across modules.

use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

/// Largest singular value. Matrices here are at most a handful of rows, so a
/// full SVD is cheap and robust.
pub fn spectral_norm<S: Real>(m: &DMatrix<S>) -> S {
    if m.is_empty() {
        return S::zero();
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Max-abs entry, used for entrywise residuals.
pub fn max_abs<S: Real>(m: &DMatrix<S>) -> S {
    m.iter().fold(S::zero(), |acc, &x| acc.max(x.abs()))
}

/// Deviation of `a` from orthogonality, `max_abs(aᵀa − I)`.
pub fn orthogonality_defect<S: Real>(a: &DMatrix<S>) -> S {
    let n = a.ncols();
    max_abs(&(a.transpose() * a - DMatrix::<S>::identity(n, n)))
}

/// Eigenvalues and eigenvectors of a symmetric matrix, sorted ascending by
/// eigenvalue. Ties keep nalgebra's deterministic output order.
pub fn sym_eigen_sorted<S: Real>(m: &DMatrix<S>) -> (Vec<S>, DMatrix<S>) {
    let se = m.clone().symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        se.eigenvalues[i]
            .partial_cmp(&se.eigenvalues[j])
            .expect("finite eigenvalues")
    });
    let values: Vec<S> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<S>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Gram–Schmidt orthonormalization of the chart basis with respect to the
/// inner product `g`, taking columns in the order given by `order`.
///
/// Returns the frame matrix whose k-th column is the k-th frame vector in
/// chart components; the result satisfies `Uᵀ g U = I`.
pub fn gram_schmidt_frame<S: Real>(
    g: &DMatrix<S>,
    order: &[usize],
    eps_frame: S,
) -> Result<DMatrix<S>> {
    let m = g.nrows();
    if order.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: order.len(),
        });
    }
    let mut u = DMatrix::<S>::zeros(m, m);
    for (k, &idx) in order.iter().enumerate() {
        if idx >= m {
            return Err(Error::DimensionMismatch { expected: m, got: idx });
        }
        let mut v = DVector::<S>::zeros(m);
        v[idx] = S::one();
        for j in 0..k {
            let uj = u.column(j).clone_owned();
            let coef = (g * &v).dot(&uj);
            v -= &uj * coef;
        }
        let norm2 = (g * &v).dot(&v);
        if norm2 <= eps_frame * eps_frame {
            return Err(Error::SingularFrame {
                det: norm2.as_f64().sqrt(),
            });
        }
        v /= norm2.sqrt();
        u.set_column(k, &v);
    }
    Ok(u)
}

/// Solves the symmetric positive-definite system `m x = b` via Cholesky.
pub fn solve_spd<S: Real>(m: &DMatrix<S>, b: &DVector<S>) -> Option<DVector<S>> {
    m.clone().cholesky().map(|ch| ch.solve(b))
}

/// Singular values of a tall stack of row blocks, descending.
pub fn stacked_singular_values<S: Real>(rows: &[DVector<S>]) -> Vec<S> {
    if rows.is_empty() {
        return Vec::new();
    }
    let m = rows[0].len();
    let mut stack = DMatrix::<S>::zeros(rows.len(), m);
    for (i, r) in rows.iter().enumerate() {
        stack.set_row(i, &r.transpose());
    }
    let mut sv: Vec<S> = stack.svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    sv
}
