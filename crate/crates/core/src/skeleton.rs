//! δ-skeleton chains: `P^δ = exp(δQ)` by uniformization, discrete-time
//! spectral gaps, and the first-order check `1 - λ(P^δ) ≈ δ λ(Q)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::config::Tolerances;
use crate::error::{invalid, Error, Result};
use crate::generator::{GeneratorMatrix, StationaryDistribution};
use crate::spectral::{spectral_gap, GapMethod, SolverChoice};

/// Dropped Poisson mass allowed in the uniformization sum.
pub const POISSON_TAIL: f64 = 1e-14;

/// Dense row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    /// Validates rows: entries `>= -1e-14` (then clamped to 0), row sums
    /// within `1e-12` of one.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return invalid(format!("row {i} has length {} (expected {n})", row.len()));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite() || *v < -1e-14) {
                return invalid(format!("entry ({i}, {j}) = {} is negative", row[j]));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return invalid(format!("row {i} sums to {sum}"));
            }
            data.extend(row.iter().map(|v| v.max(0.0)));
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &StochasticMatrix) -> StochasticMatrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        StochasticMatrix { n, data }
    }

    /// `mu P`.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, m) in mu.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.row(i)) {
                *o += m * p;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &StochasticMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `exp(δQ) = sum_m Poisson(m; qδ) P̃^m` with `P̃ = I + Q/q`, `q` the
/// largest exit rate. The sum stops once the dropped Poisson mass is at
/// most [`POISSON_TAIL`], and never runs past `qδ + 40 sqrt(qδ) + 40`
/// terms.
pub fn transition_matrix_exp(q: &GeneratorMatrix, delta: f64) -> Result<StochasticMatrix> {
    if !(delta > 0.0 && delta.is_finite()) {
        return invalid(format!("skeleton step must be positive, got {delta}"));
    }
    q.require_conservative(&Tolerances::default())?;
    let n = q.n();
    let rate = q.max_exit_rate();
    if rate == 0.0 {
        if q.nnz_off_diagonal() == 0 {
            return Ok(StochasticMatrix::identity(n));
        }
        return invalid("zero uniformization rate with nonzero off-diagonal entries");
    }

    // Uniformized kernel by sparse rows, diagonal included.
    let kernel: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> =
                q.row(i).iter().map(|&(j, v)| (j, v / rate)).collect();
            row.push((i, 1.0 + q.diagonal(i) / rate));
            row
        })
        .collect();

    let mean = rate * delta;
    let max_terms = (mean + 40.0 * mean.sqrt() + 40.0).ceil() as usize;
    let log_mean = mean.ln();

    let mut power = vec![0.0; n * n];
    for i in 0..n {
        power[i * n + i] = 1.0;
    }
    let mut next = vec![0.0; n * n];
    let mut log_weight = -mean;
    let mut weight = log_weight.exp();
    let mut accumulated = weight;
    let mut result: Vec<f64> = power.iter().map(|p| p * weight).collect();

    for m in 1..=max_terms {
        next.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..n {
            let src = &power[r * n..(r + 1) * n];
            let dst = &mut next[r * n..(r + 1) * n];
            for (k, &p) in src.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for &(j, v) in &kernel[k] {
                    dst[j] += p * v;
                }
            }
        }
        std::mem::swap(&mut power, &mut next);
        log_weight += log_mean - (m as f64).ln();
        weight = log_weight.exp();
        accumulated += weight;
        for (acc, p) in result.iter_mut().zip(&power) {
            *acc += weight * p;
        }
        if m as f64 >= mean && 1.0 - accumulated <= POISSON_TAIL {
            break;
        }
    }

    for row in result.chunks_mut(n) {
        row.iter_mut().for_each(|v| *v = v.max(0.0));
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(StochasticMatrix { n, data: result })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtmcGapReport {
    /// `λ(P)`, the largest nontrivial eigenvalue of the symmetrized kernel.
    pub lambda_p: f64,
    /// `1 - λ(P)`.
    pub gap: f64,
    pub method: GapMethod,
    pub residual: f64,
}

/// `λ(P) = λ(P̄)`, `P̄ = (P + P̂)/2`, read off as the second-largest
/// eigenvalue of `sqrt(pi(i)/pi(j)) P̄(i,j)` after deflating `sqrt(pi)`.
pub fn dtmc_spectral_gap(p: &StochasticMatrix, pi: &StationaryDistribution) -> Result<DtmcGapReport> {
    let n = p.n();
    pi.require_positive(n)?;
    let probs = pi.as_slice();
    let moved = p.left_apply(probs);
    let residual = moved
        .iter()
        .zip(probs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 {
        return invalid(format!(
            "distribution is not stationary for the kernel (residual {residual:e})"
        ));
    }
    if n == 1 {
        return Ok(DtmcGapReport {
            lambda_p: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            method: GapMethod::Dense,
            residual: 0.0,
        });
    }
    let u: Vec<f64> = probs.iter().map(|x| x.sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| {
        0.5 * ((probs[i] / probs[j]).sqrt() * p.get(i, j) + (probs[j] / probs[i]).sqrt() * p.get(j, i))
    });
    // Eigenvalues of `sym` lie in [-1, 1]; the shift sends the trivial one to -2.
    let mut shifted = sym.clone();
    for i in 0..n {
        for j in 0..n {
            shifted[(i, j)] -= 3.0 * u[i] * u[j];
        }
    }
    let eig = SymmetricEigen::new(shifted);
    let best = (0..n)
        .max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .expect("n >= 2");
    let lambda_p = eig.eigenvalues[best];
    let v = eig.eigenvectors.column(best).into_owned();
    let residual = (&sym * &v - lambda_p * &v).norm();
    if !(residual <= 1e-10) {
        return Err(Error::NumericalFailure {
            what: "discrete-time eigensolve".into(),
            residual,
        });
    }
    Ok(DtmcGapReport {
        lambda_p,
        gap: 1.0 - lambda_p,
        method: GapMethod::Dense,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkeletonRow {
    pub delta: f64,
    pub lambda_p: f64,
    /// `(1 - λ(P^δ)) / δ`.
    pub ratio: f64,
    /// `|ratio - λ(Q)|`.
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkeletonTable {
    /// `λ(Q)` the ratios are compared with.
    pub gap: f64,
    pub rows: Vec<SkeletonRow>,
}

impl SkeletonTable {
    /// CSV with columns `delta,lambda_P,ratio,abs_error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,lambda_P,ratio,abs_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.delta, r.lambda_p, r.ratio, r.abs_error
            ));
        }
        out
    }
}

/// Tabulates `(1 - λ(P^δ)) / δ` against `λ(Q)` for decreasing `δ`.
pub fn skeleton_gap_check(
    q: &GeneratorMatrix,
    pi: &StationaryDistribution,
    deltas: &[f64],
) -> Result<SkeletonTable> {
    if deltas.is_empty() {
        return invalid("no skeleton steps given");
    }
    if deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| w[0] <= w[1]) {
        return invalid("skeleton steps must be positive and strictly decreasing");
    }
    let gap = spectral_gap(q, pi, SolverChoice::Auto)?.gap;
    let rows = deltas
        .iter()
        .map(|&delta| {
            let p = transition_matrix_exp(q, delta)?;
            let report = dtmc_spectral_gap(&p, pi)?;
            let ratio = (1.0 - report.lambda_p) / delta;
            Ok(SkeletonRow {
                delta,
                lambda_p: report.lambda_p,
                ratio,
                abs_error: (ratio - gap).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SkeletonTable { gap, rows })
}

/// `exp{-(1 - max(λ,0)) / (1 + max(λ,0)) * 2 n ε² / (b - a)²}`.
pub fn dtmc_hoeffding_bound(lambda_p: f64, steps: u64, eps: f64, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return invalid(format!("range [{a}, {b}] is empty"));
    }
    if steps == 0 {
        return invalid("need at least one step");
    }
    if !(eps > 0.0) {
        return invalid(format!("epsilon must be positive, got {eps}"));
    }
    if !(lambda_p <= 1.0) {
        return invalid(format!("lambda(P) = {lambda_p} exceeds 1"));
    }
    let m = lambda_p.max(0.0);
    let contraction = (1.0 - m) / (1.0 + m);
    let width = b - a;
    Ok((-(contraction * (2.0 * steps as f64 * eps * eps / (width * width)))).exp())
}
