//! Collapsed-chain truncation of countable chains.
//!
//! For a retained set `F` the states outside `F` are merged into a single
//! state `e`. Rates inside `F` are kept, rates leaving `F` are summed into
//! `Q̃(i, e)`, and `e` jumps back into `F` with the `pi`-weighted average of
//! the outside rows:
//!
//! ```text
//! Q̃(e, i) = sum_{k not in F} pi(k) Q(k, i) / sum_{k not in F} pi(k)
//! ```
//!
//! The collapsed chain has stationary law `pi` on `F` and the outside mass at
//! `e`. Building it needs exact row access, `pi`, the outside mass, and a
//! bound on which outside states can reach `F`; [`CountableChain`] supplies
//! those.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Tolerances;
use crate::error::{invalid, Error, Result};
use crate::generator::{GeneratorMatrix, ObservableFunction, Regularity, StationaryDistribution};
use crate::spectral::{spectral_gap, SolverChoice};

/// A chain on `{0, 1, 2, ...}` (or a finite prefix of it) with known
/// stationary law.
pub trait CountableChain: Sync {
    /// Off-diagonal rates out of state `i`.
    fn rates_from(&self, i: usize) -> Vec<(usize, f64)>;

    /// `pi(i)`.
    fn stationary_mass(&self, i: usize) -> f64;

    /// `pi` mass of the complement of `retained`.
    fn tail_mass(&self, retained: &RetainedSet) -> Result<f64>;

    /// Every state `k >= in_reach_bound(m)` has no transition into `0..=m`.
    fn in_reach_bound(&self, max_retained: usize) -> usize;

    /// Number of states, or `None` for an infinite chain.
    fn state_count(&self) -> Option<usize>;

    /// Known value of the gap of the full chain, if any.
    fn gap_hint(&self) -> Option<f64> {
        None
    }
}

/// Sorted, duplicate-free list of retained state indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RetainedSet(Vec<usize>);

impl RetainedSet {
    /// `{0, ..., size - 1}`.
    pub fn prefix(size: usize) -> Self {
        Self((0..size).collect())
    }

    pub fn from_indices(mut states: Vec<usize>) -> Result<Self> {
        states.sort_unstable();
        let before = states.len();
        states.dedup();
        if states.len() != before {
            return invalid("retained set lists a state twice");
        }
        Ok(Self(states))
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, state: usize) -> bool {
        self.0.binary_search(&state).is_ok()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    fn position(&self, state: usize) -> Option<usize> {
        self.0.binary_search(&state).ok()
    }

    /// True when the set is `{0, ..., len - 1}`.
    pub fn is_prefix(&self) -> bool {
        self.max().is_none_or(|m| m + 1 == self.0.len())
    }
}

/// Constant-rate birth-death chain on the half-line: death rate `alpha`,
/// birth rate `beta`, `alpha > beta`, so `pi(k) = (1 - rho) rho^k` with
/// `rho = beta / alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricBirthDeath {
    alpha: f64,
    beta: f64,
}

impl GeometricBirthDeath {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && alpha > beta && alpha.is_finite()) {
            return invalid(format!(
                "need alpha > beta > 0 for a positive recurrent chain, got alpha={alpha}, beta={beta}"
            ));
        }
        Ok(Self { alpha, beta })
    }

    fn ratio(&self) -> f64 {
        self.beta / self.alpha
    }
}

impl CountableChain for GeometricBirthDeath {
    fn rates_from(&self, i: usize) -> Vec<(usize, f64)> {
        if i == 0 {
            vec![(1, self.beta)]
        } else {
            vec![(i - 1, self.alpha), (i + 1, self.beta)]
        }
    }

    fn stationary_mass(&self, i: usize) -> f64 {
        let rho = self.ratio();
        (1.0 - rho) * rho.powf(i as f64)
    }

    fn tail_mass(&self, retained: &RetainedSet) -> Result<f64> {
        let rho = self.ratio();
        let beyond = retained.max().map_or(0, |m| m + 1);
        let holes: f64 = (0..beyond)
            .filter(|k| !retained.contains(*k))
            .map(|k| self.stationary_mass(k))
            .sum();
        Ok(holes + rho.powf(beyond as f64))
    }

    fn in_reach_bound(&self, max_retained: usize) -> usize {
        max_retained + 2
    }

    fn state_count(&self) -> Option<usize> {
        None
    }

    fn gap_hint(&self) -> Option<f64> {
        Some((self.alpha.sqrt() - self.beta.sqrt()).powi(2))
    }
}

type RateFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// Birth-death chain on the half-line with state-dependent rates. The
/// product-form weights are tabulated up to a horizon at which the remaining
/// mass has become negligible.
#[derive(Clone)]
pub struct BirthDeathChain {
    death: RateFn,
    birth: RateFn,
    /// `pi(k)` for `k <= horizon`.
    pi: Vec<f64>,
}

impl std::fmt::Debug for BirthDeathChain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BirthDeathChain")
            .field("horizon", &(self.pi.len() - 1))
            .finish()
    }
}

impl BirthDeathChain {
    /// `death(k)` is the rate `k -> k-1` (`k >= 1`), `birth(k)` the rate
    /// `k -> k+1`. Fails when the weights `mu_k` have not decayed below
    /// `1e-17` of their running sum, with a ratio test below one, within
    /// `max_horizon` states.
    pub fn new<D, B>(death: D, birth: B, max_horizon: usize) -> Result<Self>
    where
        D: Fn(usize) -> f64 + Send + Sync + 'static,
        B: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        let mut log_mu = vec![0.0_f64];
        let mut converged = false;
        for k in 1..=max_horizon {
            let (b, a) = (birth(k - 1), death(k));
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return invalid(format!("rates at state {k} are not positive (a={a}, b={b})"));
            }
            log_mu.push(log_mu[k - 1] + b.ln() - a.ln());
            let peak = log_mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ratio = birth(k) / death(k + 1);
            if log_mu[k] - peak < (1e-17_f64).ln() && ratio < 0.9 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NumericalFailure {
                what: format!("birth-death normalising sum within {max_horizon} states"),
                residual: f64::INFINITY,
            });
        }
        let peak = log_mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_mu.iter().map(|l| (l - peak).exp()).collect();
        let total: f64 = weights.iter().sum();
        let pi = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            death: Arc::new(death),
            birth: Arc::new(birth),
            pi,
        })
    }

    /// Largest state with tabulated stationary mass.
    pub fn horizon(&self) -> usize {
        self.pi.len() - 1
    }
}

impl CountableChain for BirthDeathChain {
    fn rates_from(&self, i: usize) -> Vec<(usize, f64)> {
        if i == 0 {
            vec![(1, (self.birth)(0))]
        } else {
            vec![(i - 1, (self.death)(i)), (i + 1, (self.birth)(i))]
        }
    }

    fn stationary_mass(&self, i: usize) -> f64 {
        self.pi.get(i).copied().unwrap_or(0.0)
    }

    fn tail_mass(&self, retained: &RetainedSet) -> Result<f64> {
        let beyond = retained.max().map_or(0, |m| m + 1);
        if beyond > self.horizon() {
            return invalid(format!(
                "retained set reaches state {} beyond the tabulated horizon {}",
                beyond - 1,
                self.horizon()
            ));
        }
        Ok((0..=self.horizon())
            .filter(|k| !retained.contains(*k))
            .map(|k| self.pi[k])
            .sum())
    }

    fn in_reach_bound(&self, max_retained: usize) -> usize {
        max_retained + 2
    }

    fn state_count(&self) -> Option<usize> {
        None
    }
}

/// A finite chain viewed through the countable interface.
#[derive(Debug, Clone)]
pub struct FiniteChain {
    generator: GeneratorMatrix,
    pi: StationaryDistribution,
}

impl FiniteChain {
    pub fn new(generator: GeneratorMatrix, pi: StationaryDistribution) -> Result<Self> {
        crate::spectral::check_inputs(&generator, &pi, &Tolerances::default())?;
        Ok(Self { generator, pi })
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }
}

impl CountableChain for FiniteChain {
    fn rates_from(&self, i: usize) -> Vec<(usize, f64)> {
        self.generator.row(i).to_vec()
    }

    fn stationary_mass(&self, i: usize) -> f64 {
        self.pi.get(i)
    }

    fn tail_mass(&self, retained: &RetainedSet) -> Result<f64> {
        Ok((0..self.generator.n())
            .filter(|k| !retained.contains(*k))
            .map(|k| self.pi.get(k))
            .sum())
    }

    fn in_reach_bound(&self, _max_retained: usize) -> usize {
        self.generator.n()
    }

    fn state_count(&self) -> Option<usize> {
        Some(self.generator.n())
    }
}

/// Collapsed chain on `retained ∪ {e}`; `e` is the last index.
#[derive(Debug, Clone)]
pub struct CollapsedModel {
    pub generator: GeneratorMatrix,
    pub pi: StationaryDistribution,
    pub e_index: usize,
    pub source_set: Vec<usize>,
    /// `||pi~ Q~||_inf / max rate`.
    pub stationarity_residual: f64,
}

pub fn collapse(chain: &dyn CountableChain, retained: &RetainedSet) -> Result<CollapsedModel> {
    let tol = Tolerances::default();
    let Some(max_state) = retained.max() else {
        return invalid("retained set is empty");
    };
    if let Some(n) = chain.state_count() {
        if max_state >= n {
            return invalid(format!("retained state {max_state} out of range for {n} states"));
        }
        if retained.len() == n {
            return invalid("retained set covers the whole chain; nothing to collapse");
        }
    }
    let tail = chain.tail_mass(retained)?;
    if !(tail > 0.0) {
        return invalid(format!("outside mass is {tail}; the collapsed state would be null"));
    }
    if !tail.is_finite() {
        return Err(Error::NumericalFailure {
            what: "outside stationary mass".into(),
            residual: tail,
        });
    }

    let e = retained.len();
    let mut rates: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (local, &state) in retained.states().iter().enumerate() {
        for (to, rate) in chain.rates_from(state) {
            let target = retained.position(to).unwrap_or(e);
            if target != local {
                *rates.entry((local, target)).or_insert(0.0) += rate;
            }
        }
    }
    let reach = chain.in_reach_bound(max_state);
    let mut inflow = vec![0.0; retained.len()];
    for k in (0..reach).filter(|k| !retained.contains(*k)) {
        let mass = chain.stationary_mass(k);
        if mass == 0.0 {
            continue;
        }
        for (to, rate) in chain.rates_from(k) {
            if let Some(local) = retained.position(to) {
                inflow[local] += mass * rate;
            }
        }
    }
    for (local, flow) in inflow.into_iter().enumerate() {
        if flow != 0.0 {
            rates.insert((e, local), flow / tail);
        }
    }
    let generator = GeneratorMatrix::from_off_diagonal_map(e + 1, rates);

    let mut probs: Vec<f64> = retained
        .states()
        .iter()
        .map(|&s| chain.stationary_mass(s))
        .collect();
    probs.push(tail);
    let pi = StationaryDistribution::new_with(
        probs,
        &Tolerances {
            probability_sum: 1e-10,
            ..tol
        },
    )?;
    generator.require_admissible(&tol)?;
    let stationarity_residual = pi.residual(&generator);
    if !(stationarity_residual <= tol.stationary_residual) {
        return Err(Error::NumericalFailure {
            what: "collapsed stationary distribution".into(),
            residual: stationarity_residual,
        });
    }
    Ok(CollapsedModel {
        generator,
        pi,
        e_index: e,
        source_set: retained.states().to_vec(),
        stationarity_residual,
    })
}

/// `g` on the retained states, `0` at the collapsed state.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedFunction {
    pub function: ObservableFunction,
    /// Set when the declared range had to be widened to contain 0.
    pub range_widened: bool,
}

/// Restricts `g` to the retained set and appends the value 0 for `e`.
/// `g` must have values for every retained state.
pub fn collapse_function(g: &ObservableFunction, retained: &RetainedSet) -> Result<CollapsedFunction> {
    if let Some(m) = retained.max() {
        if m >= g.len() {
            return invalid(format!("function has no value for retained state {m}"));
        }
    }
    let mut values: Vec<f64> = retained.states().iter().map(|&s| g.values()[s]).collect();
    values.push(0.0);
    let (a, b) = g.range();
    let range_widened = a > 0.0 || b < 0.0;
    let function = ObservableFunction::new(values, a.min(0.0), b.max(0.0))?;
    Ok(CollapsedFunction {
        function,
        range_widened,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub size: usize,
    pub gap: f64,
    /// `gap - previous gap`; absent for the first size.
    pub diff: Option<f64>,
    pub seconds: f64,
}

/// Gaps of the collapsed chains for a list of increasing prefix sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSweep {
    pub entries: Vec<SweepEntry>,
    pub limit_hint: Option<f64>,
    pub regularity: Regularity,
}

impl GapSweep {
    /// Records the user's assertion that the countable chain and its
    /// symmetrization are regular. Finite chains are left as they are.
    pub fn assert_regular(mut self) -> Self {
        if self.regularity == Regularity::NotAsserted {
            self.regularity = Regularity::Asserted;
        }
        self
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.size).collect()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.gap).collect()
    }

    /// CSV with columns `size,gap,diff,seconds`.
    pub fn to_csv(&self) -> String {
        self.to_csv_with(true)
    }

    /// As [`GapSweep::to_csv`]; without timings the `seconds` column is left
    /// empty so repeated runs produce identical bytes.
    pub fn to_csv_with(&self, timings: bool) -> String {
        let mut out = String::from("size,gap,diff,seconds\n");
        for e in &self.entries {
            let diff = e.diff.map(|d| d.to_string()).unwrap_or_default();
            let seconds = if timings { format!("{:.6}", e.seconds) } else { String::new() };
            out.push_str(&format!("{},{},{},{}\n", e.size, e.gap, diff, seconds));
        }
        out
    }
}

/// Collapses onto `{0..size-1}` for each size (in parallel) and computes
/// the gap of each collapsed chain.
pub fn gap_convergence_sweep(chain: &dyn CountableChain, sizes: &[usize]) -> Result<GapSweep> {
    if sizes.is_empty() {
        return invalid("no truncation sizes given");
    }
    if sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("truncation sizes must be positive and strictly increasing");
    }
    let results: Vec<Result<(f64, f64)>> = sizes
        .par_iter()
        .map(|&size| {
            let start = Instant::now();
            let model = collapse(chain, &RetainedSet::prefix(size))?;
            let report = spectral_gap(&model.generator, &model.pi, SolverChoice::Auto)?;
            Ok((report.gap, start.elapsed().as_secs_f64()))
        })
        .collect();
    let mut entries: Vec<SweepEntry> = Vec::with_capacity(sizes.len());
    for (&size, result) in sizes.iter().zip(results) {
        let (gap, seconds) = result?;
        if !(gap > 0.0) {
            return Err(Error::NumericalFailure {
                what: format!("collapsed gap at size {size} is not positive"),
                residual: gap,
            });
        }
        let diff = entries.last().map(|prev| gap - prev.gap);
        entries.push(SweepEntry {
            size,
            gap,
            diff,
            seconds,
        });
    }
    let regularity = match chain.state_count() {
        Some(_) => Regularity::Finite,
        None => Regularity::NotAsserted,
    };
    Ok(GapSweep {
        entries,
        limit_hint: chain.gap_hint(),
        regularity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{stationary_distribution, three_state_example, Regularity};
    use approx::assert_abs_diff_eq;

    fn example_chain() -> FiniteChain {
        let q = three_state_example();
        let pi = stationary_distribution(&q).unwrap();
        FiniteChain::new(q, pi).unwrap()
    }

    #[test]
    fn single_state_complement_is_relabeling() {
        let chain = example_chain();
        let model = collapse(&chain, &RetainedSet::prefix(2)).unwrap();
        assert_eq!(model.e_index, 2);
        let q = three_state_example();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(model.generator.get(i, j), q.get(i, j), epsilon = 1e-12);
            }
        }
        assert!(model.stationarity_residual <= 1e-10);
    }

    #[test]
    fn geometric_collapse_rates() {
        // pi_k proportional to (1/2)^k: tail beyond n-1 is 2 pi(n), so
        // Q~(e, n-1) = pi(n) a_n / (2 pi(n)) = a_n / 2.
        let chain = GeometricBirthDeath::new(2.0, 1.0).unwrap();
        for n in [1usize, 5, 40] {
            let model = collapse(&chain, &RetainedSet::prefix(n)).unwrap();
            let e = model.e_index;
            assert_eq!(e, n);
            assert_abs_diff_eq!(model.generator.get(e, n - 1), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(model.generator.get(n - 1, e), 1.0, epsilon = 1e-12);
            for i in 0..n - 1 {
                assert_eq!(model.generator.get(i, e), 0.0);
                assert_eq!(model.generator.get(e, i), 0.0);
            }
            assert!(model.stationarity_residual <= 1e-10);
            assert_abs_diff_eq!(model.pi.get(e), 0.5f64.powi(n as i32), epsilon = 1e-15);
        }
    }

    #[test]
    fn non_prefix_set_uses_hole_mass() {
        let chain = GeometricBirthDeath::new(3.0, 1.0).unwrap();
        let set = RetainedSet::from_indices(vec![0, 1, 3]).unwrap();
        assert!(!set.is_prefix());
        let model = collapse(&chain, &set).unwrap();
        let tail = chain.stationary_mass(2) + (1.0f64 / 3.0).powi(4);
        assert_abs_diff_eq!(model.pi.get(3), tail, epsilon = 1e-15);
        assert!(model.stationarity_residual <= 1e-10);
    }

    #[test]
    fn general_birth_death_matches_geometric() {
        let general = BirthDeathChain::new(|_| 2.0, |_| 1.0, 10_000).unwrap();
        let geometric = GeometricBirthDeath::new(2.0, 1.0).unwrap();
        let set = RetainedSet::prefix(12);
        let a = collapse(&general, &set).unwrap();
        let b = collapse(&geometric, &set).unwrap();
        for i in 0..=12 {
            assert_abs_diff_eq!(a.pi.get(i), b.pi.get(i), epsilon = 1e-14);
            for j in 0..=12 {
                assert_abs_diff_eq!(
                    a.generator.get(i, j),
                    b.generator.get(i, j),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn divergent_birth_death_is_rejected() {
        assert!(matches!(
            BirthDeathChain::new(|_| 1.0, |_| 1.0, 1000),
            Err(Error::NumericalFailure { .. })
        ));
    }

    #[test]
    fn degenerate_sets_rejected() {
        let chain = example_chain();
        assert!(collapse(&chain, &RetainedSet::prefix(3)).is_err());
        assert!(collapse(&chain, &RetainedSet::prefix(0)).is_err());
        assert!(RetainedSet::from_indices(vec![1, 1]).is_err());
        assert!(GeometricBirthDeath::new(1.0, 1.0).is_err());
    }

    #[test]
    fn function_collapse() {
        let g = ObservableFunction::new(vec![0.0; 5], 0.0, 0.0).unwrap();
        let c = collapse_function(&g, &RetainedSet::prefix(3)).unwrap();
        assert_eq!(c.function.values(), &[0.0; 4]);

        let ind = ObservableFunction::indicator(5, 0).unwrap();
        let c = collapse_function(&ind, &RetainedSet::prefix(3)).unwrap();
        assert_eq!(c.function.values(), &[1.0, 0.0, 0.0, 0.0]);
        assert!(!c.range_widened);

        let positive = ObservableFunction::new(vec![2.0, 3.0, 4.0], 1.0, 5.0).unwrap();
        let c = collapse_function(&positive, &RetainedSet::prefix(2)).unwrap();
        assert!(c.range_widened);
        assert_eq!(c.function.range(), (0.0, 5.0));
    }

    #[test]
    fn sweep_rejects_bad_sizes() {
        let chain = GeometricBirthDeath::new(2.0, 1.0).unwrap();
        assert!(gap_convergence_sweep(&chain, &[]).is_err());
        assert!(gap_convergence_sweep(&chain, &[10, 10]).is_err());
        assert!(gap_convergence_sweep(&chain, &[0, 10]).is_err());
    }

    #[test]
    fn countable_sweep_records_assertion() {
        let chain = GeometricBirthDeath::new(2.0, 1.0).unwrap();
        let sweep = gap_convergence_sweep(&chain, &[5, 10]).unwrap();
        assert_eq!(sweep.regularity, Regularity::NotAsserted);
        let csv = sweep.to_csv_with(false);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(',')));
        assert_eq!(sweep.assert_regular().regularity, Regularity::Asserted);
    }

    #[test]
    fn finite_sweep_reproduces_gap() {
        let chain = example_chain();
        let sweep = gap_convergence_sweep(&chain, &[2]).unwrap();
        assert_abs_diff_eq!(sweep.entries[0].gap, (15.0 - 15f64.sqrt()) / 5.0, epsilon = 1e-10);
        assert!(sweep.to_csv().starts_with("size,gap,diff,seconds\n2,"));
        assert_eq!(sweep.regularity, Regularity::Finite);
        assert_eq!(sweep.assert_regular().regularity, Regularity::Finite);
    }
}
