//! L²(π) spectral gaps of finite generators.
//!
//! The gap of `Q` equals the gap of its additive symmetrization `Q̄`, and on
//! a finite state space the latter is the second-smallest eigenvalue of the
//! symmetric matrix `-S`, `S(i,j) = sqrt(pi(i)/pi(j)) Q̄(i,j)`. The trivial
//! eigenpair `(0, sqrt(pi))` is always deflated explicitly.

mod birth_death;
mod dense;
mod dirichlet;
mod drift;
mod lanczos;

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{invalid, Error, Result};
use crate::generator::{additive_symmetrization, GeneratorMatrix, StationaryDistribution};

pub use birth_death::{bd_closed_form_gap, bd_lower_bound, BirthDeathBoundReport, ChainLength};
pub use dirichlet::{dirichlet_form, rayleigh_quotient};
pub use drift::{drift_certificate_check, max_certified_rate, CertificateReport};
pub use lanczos::LanczosConfig;

/// Above this many states `SolverChoice::Auto` switches to Lanczos.
pub const AUTO_DENSE_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMethod {
    Dense,
    Lanczos,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// Result of a spectral gap computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    /// λ(Q); `+inf` for a single-state chain.
    pub gap: f64,
    pub method: GapMethod,
    /// `||(-S) v - gap v||_2` for the returned eigenvector.
    pub residual: f64,
    /// Lanczos matrix-vector products, or 1 for the dense path.
    pub iterations: usize,
    /// `||(-S) sqrt(pi)||_2`, which vanishes for a correct stationary law.
    pub trace_check: f64,
    /// Set when there is no nonconstant function (one state).
    pub degenerate: bool,
    /// Unit eigenvector of `-S` for `gap`, orthogonal to `sqrt(pi)`.
    #[serde(skip)]
    pub eigenvector: Option<Vec<f64>>,
    /// Full ascending spectrum of `-S` (dense path only).
    #[serde(skip)]
    pub spectrum: Option<Vec<f64>>,
}

impl SpectralReport {
    /// The eigenvector mapped back to a function on states, `f(i) = v(i) / sqrt(pi(i))`.
    /// It is centred under `pi` and has unit `L²(π)` norm.
    pub fn gap_function(&self, pi: &StationaryDistribution) -> Option<Vec<f64>> {
        self.eigenvector.as_ref().map(|v| {
            v.iter()
                .zip(pi.as_slice())
                .map(|(x, p)| x / p.sqrt())
                .collect()
        })
    }
}

/// The similarity transform `S` of the symmetrized generator, stored by rows.
#[derive(Debug, Clone)]
pub struct SymmetricOperator {
    diag: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    sqrt_pi: Vec<f64>,
}

impl SymmetricOperator {
    pub fn new(q: &GeneratorMatrix, pi: &StationaryDistribution) -> Result<Self> {
        check_inputs(q, pi, &Tolerances::default())?;
        let sym = additive_symmetrization(q, pi)?;
        let p = pi.as_slice();
        let rows = (0..q.n())
            .map(|i| {
                sym.row(i)
                    .iter()
                    .map(|&(j, v)| (j, (p[i] / p[j]).sqrt() * v))
                    .collect()
            })
            .collect();
        let diag = (0..q.n()).map(|i| sym.diagonal(i)).collect();
        let sqrt_pi = p.iter().map(|x| x.sqrt()).collect();
        Ok(Self {
            diag,
            rows,
            sqrt_pi,
        })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        match self.rows[i].binary_search_by_key(&j, |e| e.0) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => 0.0,
        }
    }

    /// Unit vector `sqrt(pi)` spanning the trivial eigenspace.
    pub fn trivial_vector(&self) -> &[f64] {
        &self.sqrt_pi
    }

    /// `(-S) v`.
    pub fn apply_negated(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply_negated_into(v, &mut out);
        out
    }

    pub(crate) fn apply_negated_into(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = -self.diag[i] * v[i] - self.rows[i].iter().map(|&(j, s)| s * v[j]).sum::<f64>();
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n())
            .map(|i| self.diag[i].abs() + self.rows[i].iter().map(|e| e.1.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |S(i,j) - S(j,i)|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, s) in row {
                worst = worst.max((s - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Dense copy of `-S`.
    pub fn negated_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = -self.diag[i];
            for &(j, s) in &self.rows[i] {
                m[(i, j)] = -s;
            }
        }
        m
    }

    fn residual(&self, theta: f64, v: &[f64]) -> f64 {
        self.apply_negated(v)
            .iter()
            .zip(v)
            .map(|(a, x)| (a - theta * x).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn trivial_residual(&self) -> f64 {
        norm2(&self.apply_negated(&self.sqrt_pi))
    }
}

pub(crate) fn check_inputs(
    q: &GeneratorMatrix,
    pi: &StationaryDistribution,
    tol: &Tolerances,
) -> Result<()> {
    q.require_admissible(tol)?;
    pi.require_positive(q.n())?;
    let residual = pi.residual(q);
    if residual > tol.stationary_residual {
        return invalid(format!(
            "distribution is not stationary for the generator (residual {residual:e})"
        ));
    }
    Ok(())
}

pub fn spectral_gap(
    q: &GeneratorMatrix,
    pi: &StationaryDistribution,
    method: SolverChoice,
) -> Result<SpectralReport> {
    spectral_gap_with(q, pi, method, &Tolerances::default())
}

pub fn spectral_gap_with(
    q: &GeneratorMatrix,
    pi: &StationaryDistribution,
    method: SolverChoice,
    tol: &Tolerances,
) -> Result<SpectralReport> {
    check_inputs(q, pi, tol)?;
    let op = SymmetricOperator::new(q, pi)?;
    let n = op.n();
    let chosen = match method {
        SolverChoice::Auto if n <= AUTO_DENSE_LIMIT => GapMethod::Dense,
        SolverChoice::Auto => GapMethod::Lanczos,
        SolverChoice::Dense => GapMethod::Dense,
        SolverChoice::Lanczos => GapMethod::Lanczos,
    };
    if n == 1 {
        return Ok(SpectralReport {
            gap: f64::INFINITY,
            method: chosen,
            residual: 0.0,
            iterations: 0,
            trace_check: op.trivial_residual(),
            degenerate: true,
            eigenvector: None,
            spectrum: Some(vec![0.0]),
        });
    }
    let scale = op.norm_inf().max(f64::MIN_POSITIVE);
    let limit = tol.eigen_residual * scale;
    let (gap, vector, iterations, spectrum) = match chosen {
        GapMethod::Dense => {
            let d = dense::smallest_nontrivial(&op);
            (d.value, d.vector, 1, Some(d.spectrum))
        }
        _ => {
            let cfg = LanczosConfig::for_size(n, limit);
            let l = lanczos::smallest_nontrivial(&op, &cfg)?;
            (l.value, l.vector, l.matvecs, None)
        }
    };
    let residual = op.residual(gap, &vector);
    if !(residual <= limit) {
        return Err(Error::NumericalFailure {
            what: format!("{chosen:?} eigensolve"),
            residual,
        });
    }
    Ok(SpectralReport {
        gap: gap.max(0.0),
        method: chosen,
        residual,
        iterations,
        trace_check: op.trivial_residual(),
        degenerate: false,
        eigenvector: Some(vector),
        spectrum,
    })
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{constant_birth_death, stationary_distribution, three_state_example, two_state};
    use approx::assert_abs_diff_eq;

    #[test]
    fn example_gap() {
        let q = three_state_example();
        let pi = stationary_distribution(&q).unwrap();
        let want = (15.0 - 15f64.sqrt()) / 5.0;
        for method in [SolverChoice::Dense, SolverChoice::Lanczos] {
            let r = spectral_gap(&q, &pi, method).unwrap();
            assert_abs_diff_eq!(r.gap, want, epsilon = 1e-10);
        }
        let dense = spectral_gap(&q, &pi, SolverChoice::Dense).unwrap();
        let spectrum = dense.spectrum.unwrap();
        assert_abs_diff_eq!(spectrum[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(spectrum[2], (15.0 + 15f64.sqrt()) / 5.0, epsilon = 1e-10);
    }

    #[test]
    fn two_state_gap_is_rate_sum() {
        let q = two_state(0.4, 1.7).unwrap();
        let pi = stationary_distribution(&q).unwrap();
        for method in [SolverChoice::Dense, SolverChoice::Lanczos] {
            assert_abs_diff_eq!(spectral_gap(&q, &pi, method).unwrap().gap, 2.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_birth_death_matches_closed_form() {
        let (alpha, beta) = (2.0, 1.0);
        for n_max in [1usize, 5, 30] {
            let q = constant_birth_death(alpha, beta, n_max).unwrap();
            let pi = stationary_distribution(&q).unwrap();
            let want = alpha + beta
                - 2.0 * (alpha * beta).sqrt() * (std::f64::consts::PI / (n_max as f64 + 1.0)).cos();
            let r = spectral_gap(&q, &pi, SolverChoice::Auto).unwrap();
            assert_abs_diff_eq!(r.gap, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_state_is_degenerate() {
        let q = GeneratorMatrix::from_rates(1, []).unwrap();
        let pi = StationaryDistribution::new(vec![1.0]).unwrap();
        let r = spectral_gap(&q, &pi, SolverChoice::Auto).unwrap();
        assert!(r.degenerate);
        assert!(r.gap.is_infinite());
    }

    #[test]
    fn gap_of_symmetrization_equals_gap() {
        let q = three_state_example();
        let pi = stationary_distribution(&q).unwrap();
        let sym = additive_symmetrization(&q, &pi).unwrap();
        let a = spectral_gap(&q, &pi, SolverChoice::Dense).unwrap().gap;
        let b = spectral_gap(&sym, &pi, SolverChoice::Dense).unwrap().gap;
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }

    #[test]
    fn operator_is_symmetric_and_annihilates_sqrt_pi() {
        let q = three_state_example();
        let pi = stationary_distribution(&q).unwrap();
        let op = SymmetricOperator::new(&q, &pi).unwrap();
        assert!(op.max_asymmetry() <= 1e-12 * q.max_rate());
        assert!(op.trivial_residual() <= 1e-10);
    }

    #[test]
    fn zero_probability_is_invalid() {
        let q = two_state(1.0, 1.0).unwrap();
        let pi = StationaryDistribution::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            spectral_gap(&q, &pi, SolverChoice::Auto),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn report_serializes_expected_fields() {
        let q = two_state(1.0, 1.0).unwrap();
        let pi = stationary_distribution(&q).unwrap();
        let r = spectral_gap(&q, &pi, SolverChoice::Dense).unwrap();
        let json: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["gap", "method", "residual", "iterations"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["method"], "dense");
    }
}
