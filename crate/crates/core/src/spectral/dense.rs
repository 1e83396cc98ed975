use nalgebra::SymmetricEigen;

use super::{dot, SymmetricOperator};

pub(crate) struct DenseGap {
    pub value: f64,
    pub vector: Vec<f64>,
    /// Ascending spectrum of `-S` with the deflated eigenvalue restored.
    pub spectrum: Vec<f64>,
}

/// Smallest eigenvalue of `-S` on the complement of `sqrt(pi)`.
///
/// The trivial eigenvalue is moved out of the way with the rank-one shift
/// `-S + sigma u u^T`, `sigma` above the Gershgorin bound of `-S`, so the
/// minimum of the shifted spectrum is the gap regardless of ordering.
pub(crate) fn smallest_nontrivial(op: &SymmetricOperator) -> DenseGap {
    let n = op.n();
    let u = op.trivial_vector();
    let sigma = 2.0 * op.norm_inf() + 1.0;
    let mut shifted = op.negated_dense();
    for i in 0..n {
        for j in 0..n {
            shifted[(i, j)] += sigma * u[i] * u[j];
        }
    }
    let eig = SymmetricEigen::new(shifted);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let best = order[0];
    let vector: Vec<f64> = eig.eigenvectors.column(best).iter().copied().collect();

    // The shifted eigenpair most aligned with u carries the trivial
    // eigenvalue; report its unshifted Rayleigh value instead.
    let trivial = (0..n)
        .max_by(|&a, &b| {
            let ca = dot(eig.eigenvectors.column(a).as_slice(), u).abs();
            let cb = dot(eig.eigenvectors.column(b).as_slice(), u).abs();
            ca.total_cmp(&cb)
        })
        .expect("n >= 1");
    let mut spectrum: Vec<f64> = (0..n)
        .map(|k| {
            if k == trivial {
                eig.eigenvalues[k] - sigma
            } else {
                eig.eigenvalues[k]
            }
        })
        .collect();
    spectrum.sort_by(f64::total_cmp);

    DenseGap {
        value: eig.eigenvalues[best],
        vector,
        spectrum,
    }
}
