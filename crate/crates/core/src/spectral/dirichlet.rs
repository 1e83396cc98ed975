use crate::error::{invalid, Result};
use crate::generator::{GeneratorMatrix, StationaryDistribution};

/// `D*(f) = 1/2 sum_{i,j} pi(i) Q(i,j) (f(j) - f(i))^2`.
pub fn dirichlet_form(q: &GeneratorMatrix, pi: &StationaryDistribution, f: &[f64]) -> Result<f64> {
    if f.len() != q.n() || pi.len() != q.n() {
        return invalid(format!(
            "function has {} values, distribution {} entries, generator {} states",
            f.len(),
            pi.len(),
            q.n()
        ));
    }
    let p = pi.as_slice();
    Ok(0.5
        * q.off_diagonal()
            .map(|(i, j, rate)| p[i] * rate * (f[j] - f[i]).powi(2))
            .sum::<f64>())
}

/// `D*(f - pi(f)) / ||f - pi(f)||^2_{pi,2}`, an upper bound on the gap for
/// every nonconstant `f`.
pub fn rayleigh_quotient(q: &GeneratorMatrix, pi: &StationaryDistribution, f: &[f64]) -> Result<f64> {
    if f.len() != pi.len() {
        return invalid(format!("function has {} values for {} states", f.len(), pi.len()));
    }
    let mean = pi.expectation(f);
    let centred: Vec<f64> = f.iter().map(|v| v - mean).collect();
    let variance: f64 = pi
        .as_slice()
        .iter()
        .zip(&centred)
        .map(|(p, v)| p * v * v)
        .sum();
    let scale = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(variance > (1e-12 * scale).powi(2)) || variance == 0.0 {
        return invalid("function is constant under pi (zero variance)");
    }
    Ok(dirichlet_form(q, pi, &centred)? / variance)
}
