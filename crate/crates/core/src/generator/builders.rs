use crate::error::{invalid, Result};

use super::GeneratorMatrix;

/// The three-state irreversible chain used throughout the tests and the CLI
/// `--example three-state` model.
pub fn three_state_example() -> GeneratorMatrix {
    GeneratorMatrix::from_rates(
        3,
        [
            (0, 1, 1.0),
            (0, 2, 1.0),
            (1, 0, 1.0),
            (1, 2, 2.0),
            (2, 0, 1.0),
        ],
    )
    .expect("static example is well formed")
}

/// `[[-a, a], [b, -b]]`.
pub fn two_state(a: f64, b: f64) -> Result<GeneratorMatrix> {
    if !(a > 0.0 && b > 0.0) {
        return invalid(format!("two-state rates must be positive, got a={a}, b={b}"));
    }
    GeneratorMatrix::from_rates(2, [(0, 1, a), (1, 0, b)])
}

/// Birth-death generator on `0..=N` with death rates `death[k-1] = a_k`
/// (`k = 1..=N`) and birth rates `birth[k] = b_k` (`k = 0..N`).
pub fn build_birth_death(death: &[f64], birth: &[f64]) -> Result<GeneratorMatrix> {
    let n_max = death.len();
    if n_max == 0 {
        return invalid("birth-death chain needs N >= 1");
    }
    if birth.len() != n_max {
        return invalid(format!(
            "{} death rates but {} birth rates",
            n_max,
            birth.len()
        ));
    }
    if let Some(k) = death.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        return invalid(format!("death rate a_{} = {} is not positive", k + 1, death[k]));
    }
    if let Some(k) = birth.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        return invalid(format!("birth rate b_{k} = {} is not positive", birth[k]));
    }
    let rates = (0..n_max).flat_map(|k| [(k, k + 1, birth[k]), (k + 1, k, death[k])]);
    GeneratorMatrix::from_rates(n_max + 1, rates)
}

/// Birth-death chain on `0..=N` with every death rate `alpha` and every
/// birth rate `beta`.
pub fn constant_birth_death(alpha: f64, beta: f64, n_max: usize) -> Result<GeneratorMatrix> {
    build_birth_death(&vec![alpha; n_max], &vec![beta; n_max])
}
