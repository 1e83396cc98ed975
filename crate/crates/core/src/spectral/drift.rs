use serde::Serialize;

use crate::error::{invalid, Result};
use crate::generator::GeneratorMatrix;

/// Outcome of checking `QV(i) <= -beta V(i)` for every `i != j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub beta: f64,
    pub target: usize,
    /// States where `(QV)(i) > -beta V(i) + 1e-12`.
    pub failing_states: Vec<usize>,
    /// `min_{i != j} (-(QV)(i) - beta V(i))`; nonnegative when certified.
    pub worst_margin: f64,
}

impl CertificateReport {
    /// An empty failure list certifies `gap >= beta` for a reversible chain.
    pub fn certified(&self) -> bool {
        self.failing_states.is_empty()
    }
}

fn check_lyapunov(q: &GeneratorMatrix, v: &[f64], target: usize) -> Result<Vec<f64>> {
    if v.len() != q.n() {
        return invalid(format!("V has {} entries for {} states", v.len(), q.n()));
    }
    if target >= q.n() {
        return invalid(format!("target state {target} out of range"));
    }
    if let Some(i) = v.iter().position(|x| !(*x >= 1.0) || !x.is_finite()) {
        return invalid(format!("V({i}) = {} is below 1", v[i]));
    }
    Ok(q.apply(v))
}

pub fn drift_certificate_check(
    q: &GeneratorMatrix,
    v: &[f64],
    beta: f64,
    target: usize,
) -> Result<CertificateReport> {
    if !(beta > 0.0) {
        return invalid(format!("beta must be positive, got {beta}"));
    }
    let qv = check_lyapunov(q, v, target)?;
    let mut failing_states = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for i in (0..q.n()).filter(|&i| i != target) {
        let margin = -qv[i] - beta * v[i];
        worst_margin = worst_margin.min(margin);
        if qv[i] > -beta * v[i] + 1e-12 {
            failing_states.push(i);
        }
    }
    Ok(CertificateReport {
        beta,
        target,
        failing_states,
        worst_margin,
    })
}

/// Largest `beta` the function `V` certifies: `min_{i != j} -(QV)(i) / V(i)`.
/// Nonpositive when `V` certifies nothing.
pub fn max_certified_rate(q: &GeneratorMatrix, v: &[f64], target: usize) -> Result<f64> {
    let qv = check_lyapunov(q, v, target)?;
    Ok((0..q.n())
        .filter(|&i| i != target)
        .map(|i| -qv[i] / v[i])
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{stationary_distribution, two_state};
    use crate::spectral::{spectral_gap, SolverChoice};

    #[test]
    fn constant_function_fails_everywhere_off_target() {
        let q = crate::generator::three_state_example();
        let r = drift_certificate_check(&q, &[1.0; 3], 0.5, 1).unwrap();
        assert_eq!(r.failing_states, vec![0, 2]);
        assert!(!r.certified());
    }

    #[test]
    fn two_state_certificate() {
        // Only state 1 is checked: QV(1) = b (1 - (1 + c)) = -b c, which is
        // <= -beta (1 + c) iff beta <= b c / (1 + c).
        let (a, b) = (1.0, 2.0);
        let q = two_state(a, b).unwrap();
        let c = 3.0;
        let v = [1.0, 1.0 + c];
        let beta = b * c / (1.0 + c);
        let r = drift_certificate_check(&q, &v, beta, 0).unwrap();
        assert!(r.certified());
        assert!(drift_certificate_check(&q, &v, beta * 1.01, 0).unwrap().failing_states == vec![1]);
        assert!((max_certified_rate(&q, &v, 0).unwrap() - beta).abs() < 1e-14);

        let pi = stationary_distribution(&q).unwrap();
        let gap = spectral_gap(&q, &pi, SolverChoice::Dense).unwrap().gap;
        assert!(beta <= gap + 1e-9);
    }

    #[test]
    fn invalid_inputs() {
        let q = two_state(1.0, 1.0).unwrap();
        assert!(drift_certificate_check(&q, &[0.5, 1.0], 0.1, 0).is_err());
        assert!(drift_certificate_check(&q, &[1.0, 1.0], 0.0, 0).is_err());
        assert!(drift_certificate_check(&q, &[1.0, 1.0], 0.1, 2).is_err());
        assert!(drift_certificate_check(&q, &[1.0], 0.1, 0).is_err());
    }
}
