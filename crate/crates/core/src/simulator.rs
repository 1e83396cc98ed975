//! Exact jump-chain simulation of continuous-time chains and Monte Carlo
//! estimates of `P((1/t) ∫ g(X_s) ds - π(g) >= ε)`.
//!
//! Replication `r` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to
//! stream `r`, so results do not depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::config::Tolerances;
use crate::error::{invalid, Error, Result};
use crate::generator::{stationary_distribution, GeneratorMatrix, ObservableFunction};

pub const DEFAULT_JUMP_CAP: u64 = 10_000_000;
pub const DEFAULT_CONFIDENCE: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    /// Jumps allowed on one path before giving up.
    pub jump_cap: u64,
    /// One-sided confidence level of `ci_upper`.
    pub confidence: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            jump_cap: DEFAULT_JUMP_CAP,
            confidence: DEFAULT_CONFIDENCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    /// Jump epochs, strictly increasing, all below the horizon.
    pub jump_times: Vec<f64>,
    /// `states[0]` is the initial state, `states[k]` the state entered at
    /// `jump_times[k - 1]`.
    pub states: Vec<usize>,
    pub time_average: f64,
}

/// Jump chain with cumulative off-diagonal rates per row.
struct JumpChain {
    rows: Vec<Vec<(usize, f64)>>,
}

impl JumpChain {
    fn new(q: &GeneratorMatrix) -> Self {
        let rows = (0..q.n())
            .map(|i| {
                let mut acc = 0.0;
                q.row(i)
                    .iter()
                    .filter(|(_, r)| *r > 0.0)
                    .map(|&(j, r)| {
                        acc += r;
                        (j, acc)
                    })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    /// Walks one path up to `horizon`, reporting each jump as
    /// `(time, new_state)`.
    fn walk<R: Rng>(
        &self,
        x0: usize,
        horizon: f64,
        cap: u64,
        rng: &mut R,
        mut on_jump: impl FnMut(f64, usize),
    ) -> Result<()> {
        let mut state = x0;
        let mut clock = 0.0;
        let mut jumps = 0u64;
        loop {
            let row = &self.rows[state];
            let Some(&(_, exit)) = row.last() else {
                return Ok(());
            };
            let hold: f64 = rng.sample(Exp1);
            clock += hold / exit;
            if clock >= horizon {
                return Ok(());
            }
            jumps += 1;
            if jumps > cap {
                return Err(Error::ExplosionGuard { cap });
            }
            let u = rng.random::<f64>() * exit;
            let k = row.partition_point(|&(_, c)| c <= u).min(row.len() - 1);
            state = row[k].0;
            on_jump(clock, state);
        }
    }

    /// `(1/t) ∫_0^t g(X_s) ds`, accumulated as
    /// `g(x_0) + sum_k (g(x_k) - g(x_{k-1})) (t - τ_k) / t` so that a
    /// constant `g` gives its value exactly. `t = 0` gives `g(x0)`.
    fn time_average<R: Rng>(
        &self,
        g: &ObservableFunction,
        x0: usize,
        t: f64,
        cap: u64,
        rng: &mut R,
    ) -> Result<f64> {
        let values = g.values();
        let mut avg = values[x0];
        if t > 0.0 {
            let mut prev = values[x0];
            self.walk(x0, t, cap, rng, |time, state| {
                let v = values[state];
                avg += (v - prev) * ((t - time) / t);
                prev = v;
            })?;
        }
        Ok(avg.clamp(g.lower(), g.upper()))
    }
}

fn check_path_inputs(q: &GeneratorMatrix, g: &ObservableFunction, t: f64) -> Result<()> {
    q.require_admissible(&Tolerances::default())?;
    if g.len() != q.n() {
        return invalid(format!("function has {} values for {} states", g.len(), q.n()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return invalid(format!("horizon must be finite and nonnegative, got {t}"));
    }
    Ok(())
}

/// One exact trajectory on `[0, t]` started at `x0`.
pub fn sample_path<R: Rng>(
    q: &GeneratorMatrix,
    g: &ObservableFunction,
    x0: usize,
    t: f64,
    rng: &mut R,
) -> Result<TrajectorySample> {
    sample_path_with(q, g, x0, t, rng, DEFAULT_JUMP_CAP)
}

pub fn sample_path_with<R: Rng>(
    q: &GeneratorMatrix,
    g: &ObservableFunction,
    x0: usize,
    t: f64,
    rng: &mut R,
    jump_cap: u64,
) -> Result<TrajectorySample> {
    check_path_inputs(q, g, t)?;
    if x0 >= q.n() {
        return invalid(format!("initial state {x0} out of range for {} states", q.n()));
    }
    let chain = JumpChain::new(q);
    let mut jump_times = Vec::new();
    let mut states = vec![x0];
    if t > 0.0 {
        chain.walk(x0, t, jump_cap, rng, |time, state| {
            jump_times.push(time);
            states.push(state);
        })?;
    }
    let values = g.values();
    let time_average = if t > 0.0 {
        let mut sum = 0.0;
        for (k, &s) in states.iter().enumerate() {
            let start = if k == 0 { 0.0 } else { jump_times[k - 1] };
            let end = jump_times.get(k).copied().unwrap_or(t);
            sum += values[s] * (end - start);
        }
        (sum / t).clamp(g.lower(), g.upper())
    } else {
        values[x0]
    };
    Ok(TrajectorySample {
        jump_times,
        states,
        time_average,
    })
}

/// Random stream for replication `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn check_initial_law(init: &[f64], n: usize) -> Result<()> {
    if init.len() != n {
        return invalid(format!("initial law has {} entries for {n} states", init.len()));
    }
    if let Some(i) = init.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
        return invalid(format!("initial law entry {i} = {} is not a probability", init[i]));
    }
    let sum: f64 = init.iter().sum();
    if (sum - 1.0).abs() > Tolerances::default().probability_sum {
        return invalid(format!("initial law sums to {sum}"));
    }
    Ok(())
}

fn draw_initial<R: Rng>(init: &[f64], rng: &mut R) -> usize {
    if let Some(i) = init.iter().position(|p| *p == 1.0) {
        return i;
    }
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, p) in init.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    init.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Time averages of `reps` independent paths started from `init`, in
/// replication order.
pub fn simulate_time_averages(
    q: &GeneratorMatrix,
    g: &ObservableFunction,
    init: &[f64],
    t: f64,
    reps: u64,
    seed: u64,
    jump_cap: u64,
) -> Result<Vec<f64>> {
    check_path_inputs(q, g, t)?;
    check_initial_law(init, q.n())?;
    if reps == 0 {
        return invalid("need at least one replication");
    }
    let chain = JumpChain::new(q);
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(seed, r);
            let x0 = draw_initial(init, &mut rng);
            chain.time_average(g, x0, t, jump_cap, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub p_hat: f64,
    pub reps: u64,
    pub hits: u64,
    pub ci_upper: f64,
    pub confidence: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub t: f64,
}

impl TailEstimate {
    /// Counts `avg - center >= eps` over precomputed time averages.
    pub fn from_averages(
        averages: &[f64],
        center: f64,
        eps: f64,
        t: f64,
        seed: u64,
        confidence: f64,
    ) -> Result<Self> {
        let reps = averages.len() as u64;
        let hits = averages.iter().filter(|&&avg| avg - center >= eps).count() as u64;
        Ok(Self {
            p_hat: hits as f64 / reps as f64,
            reps,
            hits,
            ci_upper: clopper_pearson_upper(hits, reps, confidence)?,
            confidence,
            seed,
            epsilon: eps,
            t,
        })
    }

    /// Width of the one-sided interval, `ci_upper - p_hat`.
    pub fn slack(&self) -> f64 {
        self.ci_upper - self.p_hat
    }
}

/// Monte Carlo tail estimate with the default jump cap and 99.9% level.
pub fn tail_probability_mc(
    q: &GeneratorMatrix,
    g: &ObservableFunction,
    init: &[f64],
    t: f64,
    eps: f64,
    reps: u64,
    seed: u64,
) -> Result<TailEstimate> {
    tail_probability_mc_with(q, g, init, t, eps, reps, seed, &SimulationOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn tail_probability_mc_with(
    q: &GeneratorMatrix,
    g: &ObservableFunction,
    init: &[f64],
    t: f64,
    eps: f64,
    reps: u64,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<TailEstimate> {
    let pi = stationary_distribution(q)?;
    let center = pi.expectation(g.values());
    let averages = simulate_time_averages(q, g, init, t, reps, seed, opts.jump_cap)?;
    TailEstimate::from_averages(&averages, center, eps, t, seed, opts.confidence)
}

/// Exact one-sided upper confidence limit for a binomial proportion after
/// `hits` successes in `n` trials: the `p` with `P(Bin(n, p) <= hits) =
/// 1 - confidence`.
pub fn clopper_pearson_upper(hits: u64, n: u64, confidence: f64) -> Result<f64> {
    if n == 0 || hits > n {
        return invalid(format!("{hits} successes in {n} trials"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return invalid(format!("confidence level must lie in (0, 1), got {confidence}"));
    }
    if hits == n {
        return Ok(1.0);
    }
    // P(Bin(n, p) >= hits + 1) = I_p(hits + 1, n - hits), increasing in p.
    let (a, b) = ((hits + 1) as f64, (n - hits) as f64);
    let mut lo = hits as f64 / n as f64;
    let mut hi = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < confidence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
