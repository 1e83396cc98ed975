//! Lanczos iteration for the smallest nontrivial eigenvalue of `-S`.
//!
//! Every Lanczos vector is reorthogonalized (twice) against `sqrt(pi)` and
//! all retained basis vectors, so the Krylov space stays inside the
//! complement of the trivial eigenvector. When the basis reaches its cap the
//! iteration restarts from the current Ritz vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{dot, norm2, SymmetricOperator};

const START_SEED: u64 = 0x6c61_6e63_7a6f_7331;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosConfig {
    /// Total matrix-vector product budget.
    pub max_matvecs: usize,
    /// Largest Krylov basis before a restart.
    pub max_basis: usize,
    /// Absolute residual `||(-S)x - theta x||_2` accepted as converged.
    pub tolerance: f64,
}

impl LanczosConfig {
    /// Budget of `50 n` products, basis capped at `min(n - 1, 600)`.
    pub fn for_size(n: usize, tolerance: f64) -> Self {
        Self {
            max_matvecs: 50 * n.max(1),
            max_basis: n.saturating_sub(1).clamp(1, 600),
            tolerance,
        }
    }
}

pub(crate) struct LanczosGap {
    pub value: f64,
    pub vector: Vec<f64>,
    pub matvecs: usize,
}

pub(crate) fn smallest_nontrivial(op: &SymmetricOperator, cfg: &LanczosConfig) -> Result<LanczosGap> {
    let n = op.n();
    let u = op.trivial_vector();
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut matvecs = 0;
    let mut best_residual = f64::INFINITY;

    loop {
        orthogonalize(&mut start, std::iter::once(u));
        orthogonalize(&mut start, std::iter::once(u));
        let norm = norm2(&start);
        if norm == 0.0 {
            return Err(Error::NumericalFailure {
                what: "Lanczos start vector collapsed".into(),
                residual: best_residual,
            });
        }
        start.iter_mut().for_each(|x| *x /= norm);

        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![0.0; n];

        let (theta, y) = loop {
            let k = basis.len() - 1;
            op.apply_negated_into(&basis[k], &mut w);
            matvecs += 1;
            let a = dot(&basis[k], &w);
            alpha.push(a);
            for (wi, vi) in w.iter_mut().zip(&basis[k]) {
                *wi -= a * vi;
            }
            if k > 0 {
                let b = beta[k - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[k - 1]) {
                    *wi -= b * vi;
                }
            }
            for _ in 0..2 {
                orthogonalize(&mut w, std::iter::once(u).chain(basis.iter().map(Vec::as_slice)));
            }
            let b = norm2(&w);

            let (theta, y) = tridiagonal_smallest(&alpha, &beta);
            let estimate = b * y[k].abs();
            let exhausted = basis.len() >= cfg.max_basis || b <= f64::EPSILON * a.abs().max(1.0);
            if estimate <= cfg.tolerance || exhausted || matvecs >= cfg.max_matvecs {
                break (theta, y);
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        };

        let mut x = vec![0.0; n];
        for (coef, v) in y.iter().zip(&basis) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += coef * vi;
            }
        }
        orthogonalize(&mut x, std::iter::once(u));
        let norm = norm2(&x);
        x.iter_mut().for_each(|xi| *xi /= norm);
        let residual = op.residual(theta, &x);
        best_residual = best_residual.min(residual);
        if residual <= cfg.tolerance {
            return Ok(LanczosGap {
                value: theta,
                vector: x,
                matvecs,
            });
        }
        if matvecs >= cfg.max_matvecs {
            return Err(Error::NumericalFailure {
                what: format!("Lanczos after {matvecs} products"),
                residual: best_residual,
            });
        }
        start = x;
    }
}

fn orthogonalize<'a>(w: &mut [f64], against: impl Iterator<Item = &'a [f64]>) {
    for v in against {
        let c = dot(w, v);
        for (wi, vi) in w.iter_mut().zip(v) {
            *wi -= c * vi;
        }
    }
}

/// Smallest eigenpair of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`: Sturm-sequence bisection for the value,
/// inverse iteration for the unit vector.
pub(crate) fn tridiagonal_smallest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let m = alpha.len();
    if m == 1 {
        return (alpha[0], vec![1.0]);
    }
    let radius = |i: usize| {
        let left = if i > 0 { beta[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < m { beta[i].abs() } else { 0.0 };
        left + right
    };
    let mut lo = (0..m).map(|i| alpha[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..m).map(|i| alpha[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * scale {
            break;
        }
        if count_below(alpha, beta, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let theta = 0.5 * (lo + hi);

    let shifted: Vec<f64> = alpha.iter().map(|a| a - theta).collect();
    let mut y = vec![1.0; m];
    for _ in 0..3 {
        y = solve_tridiagonal(beta, &shifted, beta, &y);
        let norm = norm2(&y);
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        y.iter_mut().for_each(|v| *v /= norm);
    }
    (theta, y)
}

/// Number of eigenvalues strictly below `x`.
fn count_below(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = alpha[0] - x;
    if d < 0.0 {
        count += 1;
    }
    for i in 1..alpha.len() {
        let prev = if d == 0.0 { f64::EPSILON * beta[i - 1].abs().max(f64::MIN_POSITIVE) } else { d };
        d = alpha[i] - x - beta[i - 1] * beta[i - 1] / prev;
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gaussian elimination with partial pivoting on a tridiagonal system.
/// Exactly singular pivots are perturbed, which is what inverse iteration
/// needs.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let tiny = f64::EPSILON * diag.iter().map(|d| d.abs()).fold(f64::MIN_POSITIVE, f64::max);
    let mut dl = sub.to_vec();
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut b = rhs.to_vec();
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                d[i] = tiny;
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let temp = b[i];
            b[i] = b[i + 1];
            b[i + 1] = temp - fact * b[i + 1];
        }
        dl[i] = 0.0;
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = tiny;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    if n >= 2 {
        x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    x
}
