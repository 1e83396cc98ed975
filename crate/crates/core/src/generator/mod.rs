//! Conservative Q-matrices on finite state sets.
//!
//! A [`GeneratorMatrix`] stores off-diagonal rates row by row (sorted by
//! column) together with an explicit diagonal. Construction does not enforce
//! the generator axioms so that malformed input can be loaded and then
//! diagnosed by [`validate_generator`]; every numerical routine that needs an
//! admissible matrix checks it up front.

mod builders;
mod stationary;
mod symmetrize;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{invalid, Error, Result};

pub use builders::{build_birth_death, constant_birth_death, three_state_example, two_state};
pub use stationary::{stationary_distribution, stationary_distribution_with, DENSE_SOLVE_LIMIT};
pub use symmetrize::{additive_symmetrization, dual_generator, is_reversible, is_reversible_with};

/// Sparse rate matrix with explicit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    n: usize,
    diag: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    labels: Option<Vec<String>>,
}

impl GeneratorMatrix {
    /// Builds a generator from off-diagonal rates. Diagonal triplets are
    /// ignored and the diagonal is recomputed as minus the off-diagonal row
    /// sum. Exact zeros are dropped.
    pub fn from_rates<I>(n: usize, rates: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut map = BTreeMap::new();
        for (i, j, rate) in rates {
            check_index(n, i, j)?;
            if !rate.is_finite() {
                return invalid(format!("rate ({i}, {j}) is not finite"));
            }
            if i == j {
                continue;
            }
            if map.insert((i, j), rate).is_some() {
                return invalid(format!("duplicate rate entry ({i}, {j})"));
            }
        }
        Ok(Self::from_off_diagonal_map(n, map))
    }

    /// Builds a matrix from raw entries, keeping the diagonal exactly as
    /// given (missing diagonal entries are zero). No invariant is enforced.
    pub fn from_entries<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut diag = vec![0.0; n];
        let mut map = BTreeMap::new();
        for (i, j, rate) in entries {
            check_index(n, i, j)?;
            if !rate.is_finite() {
                return invalid(format!("entry ({i}, {j}) is not finite"));
            }
            if i == j {
                diag[i] = rate;
            } else if map.insert((i, j), rate).is_some() {
                return invalid(format!("duplicate entry ({i}, {j})"));
            }
        }
        let mut rows = vec![Vec::new(); n];
        for ((i, j), rate) in map {
            if rate != 0.0 {
                rows[i].push((j, rate));
            }
        }
        Ok(Self {
            n,
            diag,
            rows,
            labels: None,
        })
    }

    /// Builds a matrix from dense rows, diagonal included verbatim.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return invalid(format!("row {bad} has length {} (expected {n})", rows[bad].len()));
        }
        Self::from_entries(
            n,
            rows.iter()
                .enumerate()
                .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v))),
        )
    }

    pub(crate) fn from_off_diagonal_map(n: usize, map: BTreeMap<(usize, usize), f64>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for ((i, j), rate) in map {
            if rate != 0.0 {
                rows[i].push((j, rate));
            }
        }
        let diag = rows
            .iter()
            .map(|r: &Vec<(usize, f64)>| -r.iter().map(|&(_, v)| v).sum::<f64>())
            .collect();
        Self {
            n,
            diag,
            rows,
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return invalid(format!(
                "{} labels supplied for {} states",
                labels.len(),
                self.n
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Off-diagonal entries of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => 0.0,
        }
    }

    /// Number of stored off-diagonal entries.
    pub fn nnz_off_diagonal(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Iterates over off-diagonal entries as `(i, j, rate)`.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, v)| (i, j, v)))
    }

    /// Largest absolute entry, which for a conservative matrix is the
    /// largest exit rate. Never returns zero so it can be used as a scale.
    pub fn max_rate(&self) -> f64 {
        let off = self
            .off_diagonal()
            .map(|(_, _, v)| v.abs())
            .fold(0.0_f64, f64::max);
        let diag = self.diag.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
        let m = off.max(diag);
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    /// Largest exit rate `max_i -Q(i,i)`.
    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().map(|&d| -d).fold(0.0_f64, f64::max)
    }

    /// `(Q v)(i) = sum_j Q(i,j) v(j)`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.diag[i] * v[i] + self.rows[i].iter().map(|&(j, q)| q * v[j]).sum::<f64>()
            })
            .collect()
    }

    /// `(mu Q)(j) = sum_i mu(i) Q(i,j)`.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.n).map(|i| mu[i] * self.diag[i]).collect();
        for (i, j, q) in self.off_diagonal() {
            out[j] += mu[i] * q;
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in dense.iter_mut().enumerate() {
            row[i] = self.diag[i];
            for &(j, v) in &self.rows[i] {
                row[j] = v;
            }
        }
        dense
    }

    pub fn validate(&self) -> ValidationReport {
        validate_generator_with(self, &Tolerances::default())
    }

    pub(crate) fn require_admissible(&self, tol: &Tolerances) -> Result<()> {
        let report = validate_generator_with(self, tol);
        if report.is_admissible() {
            Ok(())
        } else {
            Err(Error::NotAdmissible(report))
        }
    }

    /// Checks conservativeness and nonnegative off-diagonals only; used by
    /// routines that do not need irreducibility.
    pub(crate) fn require_conservative(&self, tol: &Tolerances) -> Result<()> {
        let mut report = ValidationReport {
            n: self.n,
            violations: Vec::new(),
        };
        push_local_violations(self, tol, &mut report.violations);
        if report.is_admissible() {
            Ok(())
        } else {
            Err(Error::NotAdmissible(report))
        }
    }
}

fn check_index(n: usize, i: usize, j: usize) -> Result<()> {
    if i >= n || j >= n {
        return invalid(format!("entry ({i}, {j}) out of range for {n} states"));
    }
    Ok(())
}

/// Strictly positive probability vector, stationary for some generator.
///
/// Construction only checks that the entries form a probability vector;
/// positivity is enforced by the operations that divide by `pi(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::new_with(probs, &Tolerances::default())
    }

    pub fn new_with(probs: Vec<f64>, tol: &Tolerances) -> Result<Self> {
        if probs.is_empty() {
            return invalid("empty probability vector");
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return invalid(format!("probability at state {i} is {}", probs[i]));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > tol.probability_sum {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// `pi(f) = sum_i pi(i) f(i)`.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.probs.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    /// `||pi Q||_inf / max rate`.
    pub fn residual(&self, q: &GeneratorMatrix) -> f64 {
        let r = q.left_apply(&self.probs);
        r.iter().map(|v| v.abs()).fold(0.0, f64::max) / q.max_rate()
    }

    pub(crate) fn require_positive(&self, n: usize) -> Result<()> {
        if self.probs.len() != n {
            return invalid(format!(
                "distribution has {} entries for {n} states",
                self.probs.len()
            ));
        }
        if let Some(i) = self.probs.iter().position(|&p| p <= 0.0) {
            return invalid(format!("pi({i}) = {} is not strictly positive", self.probs[i]));
        }
        Ok(())
    }
}

/// Bounded function `g: E -> [a, b]` given by its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableFunction {
    values: Vec<f64>,
    range: (f64, f64),
}

impl ObservableFunction {
    pub fn new(values: Vec<f64>, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a > b {
            return invalid(format!("range [{a}, {b}] is not a finite interval"));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !v.is_finite() || *v < a || *v > b)
        {
            return invalid(format!(
                "value {} at state {i} lies outside [{a}, {b}]",
                values[i]
            ));
        }
        Ok(Self {
            values,
            range: (a, b),
        })
    }

    /// Uses the tightest range `[min, max]`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let a = values.iter().copied().fold(f64::INFINITY, f64::min);
        let b = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            return invalid("empty function");
        }
        Self::new(values, a, b)
    }

    /// `1{state}` on `n` states with range `[0, 1]`.
    pub fn indicator(n: usize, state: usize) -> Result<Self> {
        if state >= n {
            return invalid(format!("state {state} out of range for {n} states"));
        }
        let mut values = vec![0.0; n];
        values[state] = 1.0;
        Self::new(values, 0.0, 1.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.range.0
    }

    pub fn upper(&self) -> f64 {
        self.range.1
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }
}

/// Whether the chain (and its additive symmetrization) is known to be
/// regular, i.e. non-explosive. This cannot be decided from a finite
/// truncation, so for countable chains it is whatever the user asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    /// Finite state space: bounded rates, hence regular.
    Finite,
    /// Countable chain asserted regular by the user.
    Asserted,
    /// Countable chain with no assertion.
    NotAsserted,
}

impl Regularity {
    pub fn countable(asserted: bool) -> Self {
        if asserted {
            Regularity::Asserted
        } else {
            Regularity::NotAsserted
        }
    }
}

/// A single failed generator axiom.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// `Q(i,i) + sum_{j != i} Q(i,j)` differs from zero.
    RowSumDefect { row: usize, defect: f64 },
    NegativeOffDiagonal { row: usize, col: usize, rate: f64 },
    /// Some states are not reachable from state 0, or cannot reach it.
    Reducible {
        unreachable_from_origin: Vec<usize>,
        cannot_reach_origin: Vec<usize>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSumDefect { row, defect } => {
                write!(f, "row {row} sums to {defect:e} instead of 0")
            }
            Violation::NegativeOffDiagonal { row, col, rate } => {
                write!(f, "negative off-diagonal rate {rate} at ({row}, {col})")
            }
            Violation::Reducible {
                unreachable_from_origin,
                cannot_reach_origin,
            } => write!(
                f,
                "reducible: {} state(s) unreachable from 0, {} state(s) cannot reach 0",
                unreachable_from_origin.len(),
                cannot_reach_origin.len()
            ),
        }
    }
}

/// Outcome of [`validate_generator`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn row_sum_defects(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.violations.iter().filter_map(|v| match v {
            Violation::RowSumDefect { row, defect } => Some((*row, *defect)),
            _ => None,
        })
    }

    pub fn is_reducible(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, Violation::Reducible { .. }))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "admissible generator on {} states", self.n);
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Lists every violated generator axiom, or none for an admissible matrix.
pub fn validate_generator(q: &GeneratorMatrix) -> ValidationReport {
    validate_generator_with(q, &Tolerances::default())
}

pub fn validate_generator_with(q: &GeneratorMatrix, tol: &Tolerances) -> ValidationReport {
    let mut violations = Vec::new();
    push_local_violations(q, tol, &mut violations);

    let forward = reachable(q.n, 0, |i| q.rows[i].iter().filter(|e| e.1 > 0.0).map(|e| e.0).collect());
    let mut reverse_adj = vec![Vec::new(); q.n];
    for (i, j, v) in q.off_diagonal() {
        if v > 0.0 {
            reverse_adj[j].push(i);
        }
    }
    let backward = reachable(q.n, 0, |j| reverse_adj[j].clone());
    let unreachable_from_origin: Vec<usize> = (0..q.n).filter(|&i| !forward[i]).collect();
    let cannot_reach_origin: Vec<usize> = (0..q.n).filter(|&i| !backward[i]).collect();
    if !unreachable_from_origin.is_empty() || !cannot_reach_origin.is_empty() {
        violations.push(Violation::Reducible {
            unreachable_from_origin,
            cannot_reach_origin,
        });
    }
    ValidationReport { n: q.n, violations }
}

fn push_local_violations(q: &GeneratorMatrix, tol: &Tolerances, out: &mut Vec<Violation>) {
    for i in 0..q.n {
        let defect = q.diag[i] + q.rows[i].iter().map(|&(_, v)| v).sum::<f64>();
        if defect.abs() > tol.row_sum {
            out.push(Violation::RowSumDefect { row: i, defect });
        }
        for &(j, rate) in &q.rows[i] {
            if rate < 0.0 {
                out.push(Violation::NegativeOffDiagonal {
                    row: i,
                    col: j,
                    rate,
                });
            }
        }
    }
}

fn reachable(n: usize, start: usize, next: impl Fn(usize) -> Vec<usize>) -> Vec<bool> {
    let mut seen = vec![false; n];
    if n == 0 {
        return seen;
    }
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for j in next(i) {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}
