use std::collections::BTreeMap;

use crate::config::Tolerances;
use crate::error::{invalid, Result};

use super::{GeneratorMatrix, StationaryDistribution};

/// Time reversal of `q` with respect to `pi`:
/// `Q^(i,j) = pi(j) Q(j,i) / pi(i)`.
pub fn dual_generator(q: &GeneratorMatrix, pi: &StationaryDistribution) -> Result<GeneratorMatrix> {
    let tol = Tolerances::default();
    q.require_admissible(&tol)?;
    pi.require_positive(q.n())?;
    let residual = pi.residual(q);
    if residual > tol.stationary_residual {
        return invalid(format!(
            "distribution is not stationary for the generator (residual {residual:e})"
        ));
    }
    let p = pi.as_slice();
    let map: BTreeMap<(usize, usize), f64> = q
        .off_diagonal()
        .map(|(j, i, rate)| ((i, j), p[j] * rate / p[i]))
        .collect();
    let mut dual = GeneratorMatrix::from_off_diagonal_map(q.n(), map);
    dual.labels = q.labels.clone();
    Ok(dual)
}

/// `(Q + Q^) / 2`, a reversible generator with the same stationary law.
pub fn additive_symmetrization(
    q: &GeneratorMatrix,
    pi: &StationaryDistribution,
) -> Result<GeneratorMatrix> {
    let dual = dual_generator(q, pi)?;
    let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, j, rate) in q.off_diagonal().chain(dual.off_diagonal()) {
        *map.entry((i, j)).or_insert(0.0) += 0.5 * rate;
    }
    let mut sym = GeneratorMatrix::from_off_diagonal_map(q.n(), map);
    sym.labels = q.labels.clone();
    Ok(sym)
}

/// Detailed balance check: `max |pi(i) Q(i,j) - pi(j) Q(j,i)| <= 1e-12 * max rate`.
pub fn is_reversible(q: &GeneratorMatrix, pi: &StationaryDistribution) -> bool {
    is_reversible_with(q, pi, &Tolerances::default())
}

pub fn is_reversible_with(q: &GeneratorMatrix, pi: &StationaryDistribution, tol: &Tolerances) -> bool {
    if pi.len() != q.n() {
        return false;
    }
    let p = pi.as_slice();
    let bound = tol.reversibility * q.max_rate();
    q.off_diagonal()
        .all(|(i, j, rate)| (p[i] * rate - p[j] * q.get(j, i)).abs() <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{
        build_birth_death, stationary_distribution, three_state_example, two_state,
    };
    use approx::assert_abs_diff_eq;

    fn assert_matrix_eq(q: &GeneratorMatrix, want: &[[f64; 3]; 3]) {
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(q.get(i, j), want[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn example_dual_matches_closed_form() {
        let q = three_state_example();
        let pi = stationary_distribution(&q).unwrap();
        let dual = dual_generator(&q, &pi).unwrap();
        assert_matrix_eq(
            &dual,
            &[
                [-2.0, 1.0 / 3.0, 5.0 / 3.0],
                [3.0, -3.0, 0.0],
                [3.0 / 5.0, 2.0 / 5.0, -1.0],
            ],
        );
        assert!(dual.validate().is_admissible());
        assert!(pi.residual(&dual) < 1e-12);
    }

    #[test]
    fn example_symmetrization_matches_closed_form() {
        let q = three_state_example();
        let pi = stationary_distribution(&q).unwrap();
        let sym = additive_symmetrization(&q, &pi).unwrap();
        assert_matrix_eq(
            &sym,
            &[
                [-2.0, 2.0 / 3.0, 4.0 / 3.0],
                [2.0, -3.0, 1.0],
                [4.0 / 5.0, 1.0 / 5.0, -1.0],
            ],
        );
        assert!(is_reversible(&sym, &pi));
        assert!(!is_reversible(&q, &pi));
    }

    #[test]
    fn two_state_chain_is_self_dual() {
        let q = two_state(1.5, 0.25).unwrap();
        let pi = stationary_distribution(&q).unwrap();
        let dual = dual_generator(&q, &pi).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(dual.get(i, j), q.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn birth_death_is_reversible_and_fixed_by_symmetrization() {
        let q = build_birth_death(&[0.3, 2.0, 5.0], &[1.0, 0.1, 4.0]).unwrap();
        let pi = stationary_distribution(&q).unwrap();
        assert!(is_reversible(&q, &pi));
        let sym = additive_symmetrization(&q, &pi).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(sym.get(i, j), q.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_probability_rejected() {
        let q = two_state(1.0, 1.0).unwrap();
        let pi = StationaryDistribution::new(vec![1.0, 0.0]).unwrap();
        assert!(dual_generator(&q, &pi).is_err());
    }

    #[test]
    fn non_stationary_distribution_rejected() {
        let q = three_state_example();
        let pi = StationaryDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!(dual_generator(&q, &pi).is_err());
    }
}
