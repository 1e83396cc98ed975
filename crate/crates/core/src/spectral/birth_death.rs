use serde::Serialize;

use crate::error::{invalid, Result};

/// Number of states beyond the origin of a birth-death chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainLength {
    /// States `0..=N`.
    Finite(usize),
    Infinite,
}

/// Gap of the constant-rate birth-death chain with death rate `alpha` and
/// birth rate `beta`: `alpha + beta - 2 sqrt(alpha beta) cos(pi / (N + 1))`,
/// or `(sqrt(alpha) - sqrt(beta))^2` on the infinite half-line.
pub fn bd_closed_form_gap(alpha: f64, beta: f64, length: ChainLength) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return invalid(format!("rates must be positive, got alpha={alpha}, beta={beta}"));
    }
    match length {
        ChainLength::Finite(0) => invalid("birth-death chain needs N >= 1"),
        ChainLength::Finite(n) => {
            let angle = std::f64::consts::PI / (n as f64 + 1.0);
            Ok(alpha + beta - 2.0 * (alpha * beta).sqrt() * angle.cos())
        }
        ChainLength::Infinite if alpha > beta => Ok((alpha.sqrt() - beta.sqrt()).powi(2)),
        ChainLength::Infinite => invalid(format!(
            "infinite chain needs alpha > beta (positive recurrence), got alpha={alpha}, beta={beta}"
        )),
    }
}

/// Hardy-type lower bound `1 / (4 delta)` on the gap of a finite
/// birth-death chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BirthDeathBoundReport {
    /// `mu_0 = 1`, `mu_k = b_0 ... b_{k-1} / (a_1 ... a_k)`.
    pub mu: Vec<f64>,
    pub delta: f64,
    /// Index `n` attaining the supremum defining `delta`.
    pub argmax: usize,
    pub lower_bound: f64,
    /// Index origin used for `mu`.
    pub convention: &'static str,
}

/// `delta = max_{0 <= n < N} sum_{j=0}^{n} mu_j sum_{k=n}^{N-1} 1 / (mu_k b_k)`.
///
/// The two sums are accumulated relative to `mu_n` through the ratios
/// `mu_{n-1} / mu_n = a_n / b_{n-1}`, so long chains with geometric `mu` do
/// not overflow.
pub fn bd_lower_bound(death: &[f64], birth: &[f64]) -> Result<BirthDeathBoundReport> {
    let n_max = death.len();
    if n_max == 0 {
        return invalid("birth-death chain needs N >= 1");
    }
    if birth.len() != n_max {
        return invalid(format!("{n_max} death rates but {} birth rates", birth.len()));
    }
    if let Some(k) = death.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        return invalid(format!("death rate a_{} = {} is not positive", k + 1, death[k]));
    }
    if let Some(k) = birth.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        return invalid(format!("birth rate b_{k} = {} is not positive", birth[k]));
    }

    let mut mu = Vec::with_capacity(n_max + 1);
    mu.push(1.0);
    for k in 1..=n_max {
        mu.push(mu[k - 1] * birth[k - 1] / death[k - 1]);
    }

    // prefix[n] = sum_{j<=n} mu_j / mu_n
    let mut prefix = vec![1.0; n_max];
    for n in 1..n_max {
        prefix[n] = prefix[n - 1] * death[n - 1] / birth[n - 1] + 1.0;
    }
    // suffix[n] = sum_{k=n}^{N-1} mu_n / (mu_k b_k)
    let mut suffix = vec![0.0; n_max];
    suffix[n_max - 1] = 1.0 / birth[n_max - 1];
    for n in (0..n_max - 1).rev() {
        suffix[n] = 1.0 / birth[n] + suffix[n + 1] * death[n] / birth[n];
    }
    let (argmax, delta) = prefix
        .iter()
        .zip(&suffix)
        .map(|(p, s)| p * s)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (n, d)| if d > best.1 { (n, d) } else { best });

    Ok(BirthDeathBoundReport {
        mu,
        delta,
        argmax,
        lower_bound: 1.0 / (4.0 * delta),
        convention: "mu_0 = 1, mu_k = b_0...b_{k-1} / (a_1...a_k)",
    })
}
