//! Closed-form tail bounds for time averages and verification reports that
//! compare them with Monte Carlo estimates.

use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::generator::{
    stationary_distribution, GeneratorMatrix, ObservableFunction, Regularity, StationaryDistribution,
};
use crate::simulator::{simulate_time_averages, SimulationOptions, TailEstimate};
use crate::skeleton::dtmc_hoeffding_bound;
use crate::spectral::{spectral_gap, GapMethod, SolverChoice};

/// Width of the interval above which a one-sided confidence limit is
/// reported as statistically uninformative.
pub const UNINFORMATIVE_WIDTH: f64 = 0.5;

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be positive and finite, got {value}"))
    }
}

fn check_range(a: f64, b: f64) -> Result<()> {
    if a < b && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        invalid(format!("range [{a}, {b}] is empty"))
    }
}

/// `exp(-λ t ε² / (b - a)²)`.
pub fn ctmc_hoeffding_bound(lambda: f64, t: f64, eps: f64, a: f64, b: f64) -> Result<f64> {
    check_positive("spectral gap", lambda)?;
    check_positive("horizon", t)?;
    check_positive("epsilon", eps)?;
    check_range(a, b)?;
    let width = b - a;
    Ok((-(lambda * t * eps * eps / (width * width))).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LezaudPair {
    /// `exp(-λ t ε² / 12)`.
    pub lezaud: f64,
    /// `exp(-λ t ε² / 4)`.
    pub improved: f64,
}

/// Both constants for centered, normalized `g`; the caller is responsible
/// for the normalization (see [`LezaudHypotheses`]).
pub fn lezaud_bound(lambda: f64, t: f64, eps: f64) -> Result<LezaudPair> {
    check_positive("spectral gap", lambda)?;
    check_positive("horizon", t)?;
    check_positive("epsilon", eps)?;
    let e = lambda * t * eps * eps;
    Ok(LezaudPair {
        lezaud: (-e / 12.0).exp(),
        improved: (-e / 4.0).exp(),
    })
}

/// Normalization of `g` required by the twelve-denominator comparison:
/// `π(g) = 0` and `||g||_∞ = ||g||²_{π,2} = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LezaudHypotheses {
    pub mean: f64,
    pub sup_norm: f64,
    pub l2_norm_sq: f64,
    pub holds: bool,
}

impl LezaudHypotheses {
    pub fn check(g: &ObservableFunction, pi: &StationaryDistribution) -> Self {
        Self::check_with(g, pi, 1e-12)
    }

    pub fn check_with(g: &ObservableFunction, pi: &StationaryDistribution, tol: f64) -> Self {
        let values = g.values();
        let mean = pi.expectation(values);
        let sup_norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
        let l2_norm_sq = pi.expectation(&squares);
        let holds = mean.abs() <= tol && (sup_norm - 1.0).abs() <= tol && (l2_norm_sq - 1.0).abs() <= tol;
        Self {
            mean,
            sup_norm,
            l2_norm_sq,
            holds,
        }
    }
}

/// `||dν/dπ||_{π,p}`: `[sum_i π(i) (ν(i)/π(i))^p]^{1/p}`, or
/// `max_i ν(i)/π(i)` for `p = ∞`.
pub fn density_pnorm(nu: &[f64], pi: &StationaryDistribution, p: f64) -> Result<f64> {
    let probs = pi.as_slice();
    if nu.len() != probs.len() {
        return invalid(format!("initial law has {} entries for {} states", nu.len(), probs.len()));
    }
    if !(p > 1.0) {
        return invalid(format!("exponent p must exceed 1, got {p}"));
    }
    if let Some(i) = nu.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return invalid(format!("initial law entry {i} = {} is not a probability", nu[i]));
    }
    let sum: f64 = nu.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return invalid(format!("initial law sums to {sum}"));
    }
    if let Some(i) = (0..nu.len()).find(|&i| nu[i] > 0.0 && probs[i] == 0.0) {
        return invalid(format!(
            "initial law charges state {i}, which has zero stationary probability"
        ));
    }
    let ratios = nu.iter().zip(probs).filter(|(_, pi)| **pi > 0.0).map(|(v, pi)| (v / pi, *pi));
    if p.is_infinite() {
        return Ok(ratios.map(|(r, _)| r).fold(0.0, f64::max));
    }
    let total: f64 = ratios.map(|(r, w)| w * r.powf(p)).sum();
    Ok(total.powf(1.0 / p))
}

/// Hölder conjugate `p / (p - 1)`, with `q = 1` at `p = ∞`.
pub fn conjugate_exponent(p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return invalid(format!("exponent p must exceed 1, got {p}"));
    }
    Ok(if p.is_infinite() { 1.0 } else { p / (p - 1.0) })
}

/// `||dν/dπ||_{π,p} exp(-λ t ε² / (q (b - a)²))`.
pub fn nu_initial_bound(
    lambda: f64,
    t: f64,
    eps: f64,
    a: f64,
    b: f64,
    p: f64,
    density_norm: f64,
) -> Result<f64> {
    let q = conjugate_exponent(p)?;
    if !(density_norm >= 1.0 - 1e-12 && density_norm.is_finite()) {
        return invalid(format!("density norm must be at least 1, got {density_norm}"));
    }
    check_positive("spectral gap", lambda)?;
    check_positive("horizon", t)?;
    check_positive("epsilon", eps)?;
    check_range(a, b)?;
    let width = b - a;
    Ok(density_norm * (-(lambda * t * eps * eps / (width * width) / q)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NuBound {
    pub p: f64,
    pub q: f64,
    pub density_norm: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DtmcBound {
    pub lambda_p: f64,
    pub steps: u64,
    pub value: f64,
}

/// Every bound that applies to one `(λ, t, ε, [a, b])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub t: f64,
    pub eps: f64,
    pub a: f64,
    pub b: f64,
    pub bound_main: f64,
    pub bound_lezaud: Option<LezaudPair>,
    pub bound_nu: Option<NuBound>,
    pub bound_dtmc: Option<DtmcBound>,
}

impl BoundReport {
    pub fn new(lambda: f64, t: f64, eps: f64, a: f64, b: f64) -> Result<Self> {
        Ok(Self {
            lambda,
            t,
            eps,
            a,
            b,
            bound_main: ctmc_hoeffding_bound(lambda, t, eps, a, b)?,
            bound_lezaud: None,
            bound_nu: None,
            bound_dtmc: None,
        })
    }

    /// Adds the Lézaud comparison only when `hypotheses.holds`.
    pub fn with_lezaud(mut self, hypotheses: &LezaudHypotheses) -> Result<Self> {
        if hypotheses.holds {
            self.bound_lezaud = Some(lezaud_bound(self.lambda, self.t, self.eps)?);
        }
        Ok(self)
    }

    pub fn with_initial_law(mut self, nu: &[f64], pi: &StationaryDistribution, p: f64) -> Result<Self> {
        let density_norm = density_pnorm(nu, pi, p)?;
        self.bound_nu = Some(NuBound {
            p,
            q: conjugate_exponent(p)?,
            density_norm,
            value: nu_initial_bound(self.lambda, self.t, self.eps, self.a, self.b, p, density_norm)?,
        });
        Ok(self)
    }

    pub fn with_dtmc(mut self, lambda_p: f64, steps: u64) -> Result<Self> {
        self.bound_dtmc = Some(DtmcBound {
            lambda_p,
            steps,
            value: dtmc_hoeffding_bound(lambda_p, steps, self.eps, self.a, self.b)?,
        });
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationRow {
    pub eps: f64,
    pub t: f64,
    pub reps: u64,
    pub p_hat: f64,
    pub ci_upper: f64,
    pub bound_main: f64,
    pub bound_lezaud: Option<f64>,
    pub verdict: Verdict,
    /// Set when `ci_upper - p_hat` exceeds [`UNINFORMATIVE_WIDTH`].
    pub uninformative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub gap: f64,
    pub gap_method: GapMethod,
    pub gap_residual: f64,
    pub stationary_residual: f64,
    /// `π(g)`.
    pub mean: f64,
    pub range: (f64, f64),
    pub t: f64,
    pub reps: u64,
    pub seed: u64,
    pub confidence: f64,
    pub regularity: Regularity,
    pub lezaud_hypotheses: LezaudHypotheses,
    pub rows: Vec<VerificationRow>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict == Verdict::Pass)
    }

    pub fn csv_header() -> &'static str {
        "eps,t,reps,p_hat,ci_upper,bound_main,bound_lezaud,verdict,gap,gap_method"
    }

    pub fn to_csv(&self) -> String {
        let method = match self.gap_method {
            GapMethod::Dense => "dense",
            GapMethod::Lanczos => "lanczos",
            GapMethod::ClosedForm => "closed_form",
        };
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for r in &self.rows {
            let lezaud = r.bound_lezaud.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.eps, r.t, r.reps, r.p_hat, r.ci_upper, r.bound_main, lezaud, r.verdict, self.gap, method
            ));
        }
        out
    }
}

/// Stationary-start verification of the main bound over a grid of `ε`.
///
/// All rows share one batch of `reps` simulated paths, so `p_hat` is
/// nonincreasing in `ε`. Rows come out sorted by `ε`.
pub fn verify(
    q: &GeneratorMatrix,
    g: &ObservableFunction,
    t: f64,
    eps_grid: &[f64],
    reps: u64,
    seed: u64,
) -> Result<VerificationReport> {
    verify_with(q, g, t, eps_grid, reps, seed, SolverChoice::Auto, &SimulationOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn verify_with(
    q: &GeneratorMatrix,
    g: &ObservableFunction,
    t: f64,
    eps_grid: &[f64],
    reps: u64,
    seed: u64,
    solver: SolverChoice,
    opts: &SimulationOptions,
) -> Result<VerificationReport> {
    if eps_grid.is_empty() {
        return invalid("epsilon grid is empty");
    }
    if reps == 0 {
        return invalid("need at least one replication");
    }
    check_positive("horizon", t)?;
    let mut grid = eps_grid.to_vec();
    for &eps in &grid {
        check_positive("epsilon", eps)?;
    }
    grid.sort_by(f64::total_cmp);
    if grid.windows(2).any(|w| w[0] == w[1]) {
        return invalid("epsilon grid has repeated values");
    }
    if g.len() != q.n() {
        return invalid(format!("function has {} values for {} states", g.len(), q.n()));
    }

    let pi = stationary_distribution(q)?;
    let spectral = spectral_gap(q, &pi, solver)?;
    let (a, b) = g.range();
    let mean = pi.expectation(g.values());
    let hypotheses = LezaudHypotheses::check(g, &pi);
    let averages = simulate_time_averages(q, g, pi.as_slice(), t, reps, seed, opts.jump_cap)?;

    let rows = grid
        .iter()
        .map(|&eps| {
            let est = TailEstimate::from_averages(&averages, mean, eps, t, seed, opts.confidence)?;
            let bounds = BoundReport::new(spectral.gap, t, eps, a, b)?.with_lezaud(&hypotheses)?;
            let verdict = if est.p_hat <= bounds.bound_main + est.slack() {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            Ok(VerificationRow {
                eps,
                t,
                reps,
                p_hat: est.p_hat,
                ci_upper: est.ci_upper,
                bound_main: bounds.bound_main,
                bound_lezaud: bounds.bound_lezaud.map(|pair| pair.lezaud),
                verdict,
                uninformative: est.slack() > UNINFORMATIVE_WIDTH,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(VerificationReport {
        gap: spectral.gap,
        gap_method: spectral.method,
        gap_residual: spectral.residual,
        stationary_residual: pi.residual(q),
        mean,
        range: (a, b),
        t,
        reps,
        seed,
        confidence: opts.confidence,
        regularity: Regularity::Finite,
        lezaud_hypotheses: hypotheses,
        rows,
    })
}
