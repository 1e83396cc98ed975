use serde::{Deserialize, Serialize};

/// Numerical tolerances used across the toolkit.
///
/// The defaults are the values every module documents; callers that need a
/// looser or tighter check pass their own copy to the `*_with` variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute tolerance on `Q(i,i) + sum_{j != i} Q(i,j)`.
    pub row_sum: f64,
    /// Bound on `||pi Q||_inf / max rate` for an accepted stationary solve.
    pub stationary_residual: f64,
    /// Detailed-balance tolerance, relative to the largest rate.
    pub reversibility: f64,
    /// Eigenpair residual, relative to `||S||_inf`.
    pub eigen_residual: f64,
    /// Tolerance on `sum(pi) = 1`.
    pub probability_sum: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            row_sum: 1e-12,
            stationary_residual: 1e-10,
            reversibility: 1e-12,
            eigen_residual: 1e-10,
            probability_sum: 1e-12,
        }
    }
}
