//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use markov_gap::bounds::{
    ctmc_hoeffding_bound, density_pnorm, lezaud_bound, nu_initial_bound, verify,
};
use markov_gap::generator::{
    additive_symmetrization, build_birth_death, constant_birth_death, dual_generator,
    stationary_distribution, three_state_example,
};
use markov_gap::skeleton::{dtmc_hoeffding_bound, skeleton_gap_check, transition_matrix_exp};
use markov_gap::spectral::{
    bd_closed_form_gap, bd_lower_bound, drift_certificate_check, max_certified_rate, spectral_gap,
    ChainLength, SolverChoice,
};
use markov_gap::truncation::{gap_convergence_sweep, GeometricBirthDeath};
use markov_gap::{GeneratorMatrix, ObservableFunction, StationaryDistribution};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn example_gap() -> f64 {
    (15.0 - 15f64.sqrt()) / 5.0
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn matrix_matches(q: &GeneratorMatrix, want: [[f64; 3]; 3], tol: f64, name: &str) -> Result<(), String> {
    for (i, row) in want.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            let got = q.get(i, j);
            ensure((got - w).abs() <= tol, || format!("{name}({i},{j}) = {got}, expected {w}"))?;
        }
    }
    Ok(())
}

fn golden_gap() -> Outcome {
    let start = Instant::now();
    let q = three_state_example();
    let pi = stationary_distribution(&q).map_err(|e| e.to_string())?;
    for (got, want) in pi.as_slice().iter().zip([1.0 / 3.0, 1.0 / 9.0, 5.0 / 9.0]) {
        ensure((got - want).abs() <= 1e-12, || format!("pi = {:?}", pi.as_slice()))?;
    }
    let dual = dual_generator(&q, &pi).map_err(|e| e.to_string())?;
    matrix_matches(&dual, [[-2.0, 1.0 / 3.0, 5.0 / 3.0], [3.0, -3.0, 0.0], [0.6, 0.4, -1.0]], 1e-12, "Q^")?;
    let bar = additive_symmetrization(&q, &pi).map_err(|e| e.to_string())?;
    matrix_matches(&bar, [[-2.0, 2.0 / 3.0, 4.0 / 3.0], [2.0, -3.0, 1.0], [0.8, 0.2, -1.0]], 1e-12, "Q-")?;
    let report = spectral_gap(&q, &pi, SolverChoice::Auto).map_err(|e| e.to_string())?;
    let err = (report.gap - example_gap()).abs();
    ensure(err <= 1e-10, || format!("gap {} off by {err:e}", report.gap))?;
    within(Duration::from_secs(1), start)?;
    Ok(format!("gap = {:.15}, |error| = {err:.1e}", report.gap))
}

fn birth_death_closed_form() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in [10, 50, 200] {
        let q = constant_birth_death(2.0, 1.0, n).map_err(|e| e.to_string())?;
        let pi = stationary_distribution(&q).map_err(|e| e.to_string())?;
        let want = 3.0 - 2.0 * 2f64.sqrt() * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        for solver in [SolverChoice::Dense, SolverChoice::Lanczos] {
            let gap = spectral_gap(&q, &pi, solver).map_err(|e| e.to_string())?.gap;
            let err = (gap - want).abs();
            worst = worst.max(err);
            ensure(err <= 1e-8, || format!("N={n} {solver:?}: gap {gap} vs {want}"))?;
        }
        let closed = bd_closed_form_gap(2.0, 1.0, ChainLength::Finite(n)).map_err(|e| e.to_string())?;
        ensure((closed - want).abs() <= 1e-14, || format!("closed form {closed} vs {want}"))?;
    }
    within(Duration::from_secs(5), start)?;
    Ok(format!("N in {{10, 50, 200}}, max |error| = {worst:.1e}"))
}

fn truncation_convergence() -> Outcome {
    let start = Instant::now();
    let limit = (2f64.sqrt() - 1.0).powi(2);
    let chain = GeometricBirthDeath::new(2.0, 1.0).map_err(|e| e.to_string())?;
    let sweep = gap_convergence_sweep(&chain, &[50, 100, 200, 500]).map_err(|e| e.to_string())?;
    let dist: Vec<f64> = sweep.gaps().iter().map(|g| (g - limit).abs()).collect();
    ensure(dist.windows(2).all(|w| w[1] < w[0]), || format!("distances not decreasing: {dist:?}"))?;
    ensure(dist[3] < 1e-3, || format!("|gap_500 - limit| = {}", dist[3]))?;
    within(Duration::from_secs(30), start)?;
    Ok(format!("|gap_n - (sqrt2-1)^2| = {}", sci(&dist)))
}

fn skeleton_expansion() -> Outcome {
    let q = three_state_example();
    let pi = stationary_distribution(&q).map_err(|e| e.to_string())?;
    let deltas = [0.1, 0.05, 0.01];
    let table = skeleton_gap_check(&q, &pi, &deltas).map_err(|e| e.to_string())?;
    let errors: Vec<f64> = table.rows.iter().map(|r| r.abs_error).collect();
    ensure(errors.windows(2).all(|w| w[1] < w[0]), || format!("errors not decreasing: {errors:?}"))?;
    let rel = errors[2] / example_gap();
    ensure(rel < 0.02, || format!("relative error at 0.01 is {rel}"))?;
    let mut semigroup: f64 = 0.0;
    for delta in deltas {
        let p = transition_matrix_exp(&q, delta).map_err(|e| e.to_string())?;
        let p2 = transition_matrix_exp(&q, 2.0 * delta).map_err(|e| e.to_string())?;
        semigroup = semigroup.max(p.compose(&p).max_abs_diff(&p2));
    }
    ensure(semigroup <= 1e-10, || format!("semigroup defect {semigroup:e}"))?;
    Ok(format!("abs errors {}, relative {rel:.2e} at 0.01, semigroup defect {semigroup:.1e}", sci(&errors)))
}

fn monte_carlo_verification() -> Outcome {
    let start = Instant::now();
    let q = three_state_example();
    let g = ObservableFunction::indicator(3, 2).map_err(|e| e.to_string())?;
    let grid = [0.05, 0.1, 0.15, 0.2];
    let report = verify(&q, &g, 20.0, &grid, 20_000, 2024).map_err(|e| e.to_string())?;
    for row in &report.rows {
        let closed_form_bound = (-example_gap() * 20.0 * row.eps * row.eps).exp();
        let slack = row.ci_upper - row.p_hat;
        ensure(row.p_hat <= closed_form_bound + slack, || {
            format!("eps={}: p_hat {} exceeds {} + {}", row.eps, row.p_hat, closed_form_bound, slack)
        })?;
        ensure(row.verdict == markov_gap::bounds::Verdict::Pass, || format!("eps={} verdict FAIL", row.eps))?;
    }
    let again = verify(&q, &g, 20.0, &grid, 20_000, 2024).map_err(|e| e.to_string())?;
    ensure(again.to_csv() == report.to_csv(), || "CSV differs on rerun".into())?;
    let (a, b) = (serde_json::to_string(&report).unwrap(), serde_json::to_string(&again).unwrap());
    ensure(a == b, || "JSON differs on rerun".into())?;
    within(Duration::from_secs(60), start)?;
    let summary: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("eps={} p_hat={:.4} bound={:.4}", r.eps, r.p_hat, r.bound_main))
        .collect();
    Ok(summary.join("; "))
}

fn bound_ordering() -> Outcome {
    let lam = example_gap();
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let t = 1.0 + 11.0 * i as f64;
            let eps = 0.02 + 0.05 * j as f64;
            let pair = lezaud_bound(lam, t, eps).map_err(|e| e.to_string())?;
            ensure(pair.improved <= pair.lezaud, || format!("t={t} eps={eps}: improved above Lezaud"))?;
            let ratio = pair.improved.ln() / pair.lezaud.ln();
            worst = worst.max((ratio - 3.0).abs());
            ensure((ratio - 3.0).abs() <= 1e-9, || format!("t={t} eps={eps}: exponent ratio {ratio}"))?;
        }
    }
    Ok(format!("100 grid points, max |ratio - 3| = {worst:.1e}"))
}

/// `V = 1 + E[time to hit 0]`, which has `QV = -1` away from state 0.
fn hitting_time_lyapunov(q: &GeneratorMatrix) -> Vec<f64> {
    let n = q.n();
    let m = DMatrix::from_fn(n - 1, n - 1, |i, j| q.get(i + 1, j + 1));
    let h = m.lu().solve(&DVector::from_element(n - 1, -1.0)).expect("nonsingular");
    std::iter::once(1.0).chain(h.iter().map(|x| 1.0 + x)).collect()
}

fn lower_bound_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tightest = f64::INFINITY;
    for instance in 0..100 {
        let n = rng.random_range(1..=60);
        let death: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
        let birth: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
        let q = build_birth_death(&death, &birth).map_err(|e| e.to_string())?;
        let pi = stationary_distribution(&q).map_err(|e| e.to_string())?;
        let gap = spectral_gap(&q, &pi, SolverChoice::Dense).map_err(|e| e.to_string())?.gap;
        let lb = bd_lower_bound(&death, &birth).map_err(|e| e.to_string())?.lower_bound;
        ensure(lb <= gap, || format!("instance {instance}: 1/(4 delta) = {lb} > gap {gap}"))?;
        tightest = tightest.min(gap / lb);

        let v = hitting_time_lyapunov(&q);
        let beta = max_certified_rate(&q, &v, 0).map_err(|e| e.to_string())?;
        ensure(beta > 0.0, || format!("instance {instance}: nothing certified"))?;
        let cert = drift_certificate_check(&q, &v, beta, 0).map_err(|e| e.to_string())?;
        ensure(cert.certified(), || format!("instance {instance}: failing {:?}", cert.failing_states))?;
        ensure(beta <= gap + 1e-9, || format!("instance {instance}: beta {beta} > gap {gap}"))?;
    }
    Ok(format!("100 instances, min gap / (1/(4 delta)) = {tightest:.3}"))
}

fn initial_law_reduction() -> Outcome {
    let q = three_state_example();
    let pi = stationary_distribution(&q).map_err(|e| e.to_string())?;
    let unit = density_pnorm(pi.as_slice(), &pi, f64::INFINITY).map_err(|e| e.to_string())?;
    for (lam, t, eps, a, b) in [
        (example_gap(), 20.0, 0.1, 0.0, 1.0),
        (0.3, 7.5, 0.25, -1.0, 2.0),
        (4.0, 0.5, 0.05, 0.5, 0.75),
    ] {
        let main = ctmc_hoeffding_bound(lam, t, eps, a, b).map_err(|e| e.to_string())?;
        let nu = nu_initial_bound(lam, t, eps, a, b, f64::INFINITY, unit).map_err(|e| e.to_string())?;
        ensure(nu == main, || format!("nu bound {nu} != main bound {main}"))?;
    }
    let point = density_pnorm(&[1.0, 0.0, 0.0], &pi, 2.0).map_err(|e| e.to_string())?;
    let err = (point - 3f64.sqrt()).abs();
    ensure(err <= 1e-12, || format!("point-mass norm {point}"))?;
    let uniform = StationaryDistribution::new(vec![1.0 / 3.0; 3]).map_err(|e| e.to_string())?;
    ensure(density_pnorm(uniform.as_slice(), &pi, 2.0).map_err(|e| e.to_string())? >= 1.0, || {
        "density norm below 1".into()
    })?;
    Ok(format!("exact reduction on 3 parameter sets; |norm - sqrt3| = {err:.1e}"))
}

fn dtmc_reduction() -> Outcome {
    let mut count = 0;
    for lambda_p in [-0.9, -0.25, -1e-3, 0.0] {
        for (n, eps, a, b) in [(1u64, 0.3, 0.0, 1.0), (10, 0.1, -1.0, 1.0), (50, 0.05, 0.0, 2.0), (200, 0.2, 2.0, 5.0), (1000, 0.01, 0.0, 0.5)] {
            let classical = (-2.0 * n as f64 * eps * eps / ((b - a) * (b - a))).exp();
            let got = dtmc_hoeffding_bound(lambda_p, n, eps, a, b).map_err(|e| e.to_string())?;
            ensure(got == classical, || format!("lambda_P={lambda_p} n={n}: {got} != {classical}"))?;
            count += 1;
        }
    }
    Ok(format!("{count} grid points equal exactly"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("golden gap of the three-state chain", golden_gap),
        ("birth-death closed form", birth_death_closed_form),
        ("truncation convergence", truncation_convergence),
        ("skeleton expansion", skeleton_expansion),
        ("Monte Carlo bound verification", monte_carlo_verification),
        ("bound ordering", bound_ordering),
        ("lower-bound consistency", lower_bound_consistency),
        ("initial-law reduction", initial_law_reduction),
        ("discrete-time reduction", dtmc_reduction),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} [{name}]: PASS ({secs:.2}s) {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL ({secs:.2}s) {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
