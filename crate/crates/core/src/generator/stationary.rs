//! Stationary distributions by state reduction.
//!
//! Both solvers implement Grassmann-Taksar-Heyman elimination: states are
//! censored one at a time from the highest index down, and the stationary
//! vector is rebuilt by back substitution. The recursion only adds and
//! divides nonnegative numbers, so each `pi(i)` is obtained to high relative
//! accuracy even when it is many orders of magnitude below the largest entry
//! (geometric birth-death tails, for example).

use std::collections::{BTreeMap, BTreeSet};

use crate::config::Tolerances;
use crate::error::{Error, Result};

use super::{GeneratorMatrix, StationaryDistribution};

/// Chains up to this size are reduced on a dense copy; larger ones use the
/// sparse elimination, whose fill-in stays inside the band for banded
/// generators.
pub const DENSE_SOLVE_LIMIT: usize = 2000;

pub fn stationary_distribution(q: &GeneratorMatrix) -> Result<StationaryDistribution> {
    stationary_distribution_with(q, &Tolerances::default())
}

pub fn stationary_distribution_with(
    q: &GeneratorMatrix,
    tol: &Tolerances,
) -> Result<StationaryDistribution> {
    q.require_admissible(tol)?;
    let mut probs = if q.n() <= DENSE_SOLVE_LIMIT {
        gth_dense(q)?
    } else {
        gth_sparse(q)?
    };
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    let pi = StationaryDistribution { probs };
    let residual = pi.residual(q);
    if !(residual <= tol.stationary_residual) {
        return Err(Error::NumericalFailure {
            what: "stationary distribution".into(),
            residual,
        });
    }
    Ok(pi)
}

fn elimination_failure(k: usize) -> Error {
    Error::NumericalFailure {
        what: format!("state reduction at state {k} (no outflow to lower states)"),
        residual: f64::INFINITY,
    }
}

fn gth_dense(q: &GeneratorMatrix) -> Result<Vec<f64>> {
    let n = q.n();
    let mut a = vec![0.0; n * n];
    for (i, j, v) in q.off_diagonal() {
        a[i * n + j] = v;
    }
    let mut outflow = vec![0.0; n];
    for k in (1..n).rev() {
        let s: f64 = a[k * n..k * n + k].iter().sum();
        if !(s > 0.0) {
            return Err(elimination_failure(k));
        }
        outflow[k] = s;
        let (upper, row_k) = a.split_at_mut(k * n);
        let row_k = &row_k[..k];
        for i in 0..k {
            let w = upper[i * n + k];
            if w == 0.0 {
                continue;
            }
            let w = w / s;
            let row_i = &mut upper[i * n..i * n + k];
            for (j, (dst, &src)) in row_i.iter_mut().zip(row_k).enumerate() {
                if j != i && src != 0.0 {
                    *dst += w * src;
                }
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        let inflow: f64 = (0..k).map(|i| pi[i] * a[i * n + k]).sum();
        pi[k] = inflow / outflow[k];
    }
    Ok(pi)
}

fn gth_sparse(q: &GeneratorMatrix) -> Result<Vec<f64>> {
    let n = q.n();
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut cols: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, j, v) in q.off_diagonal() {
        if v != 0.0 {
            rows[i].insert(j, v);
            cols[j].insert(i);
        }
    }
    let mut outflow = vec![0.0; n];
    for k in (1..n).rev() {
        let lower: Vec<(usize, f64)> = rows[k].range(..k).map(|(&j, &v)| (j, v)).collect();
        let s: f64 = lower.iter().map(|e| e.1).sum();
        if !(s > 0.0) {
            return Err(elimination_failure(k));
        }
        outflow[k] = s;
        let feeders: Vec<usize> = cols[k].range(..k).copied().collect();
        for i in feeders {
            let w = rows[i][&k] / s;
            for &(j, v) in &lower {
                if j == i {
                    continue;
                }
                *rows[i].entry(j).or_insert(0.0) += w * v;
                cols[j].insert(i);
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        let inflow: f64 = cols[k]
            .range(..k)
            .map(|&i| pi[i] * rows[i][&k])
            .sum();
        pi[k] = inflow / outflow[k];
    }
    Ok(pi)
}
