use markov_gap::generator::{stationary_distribution, three_state_example};
use markov_gap::simulator::{simulate_time_averages, tail_probability_mc, DEFAULT_JUMP_CAP};
use markov_gap::ObservableFunction;

#[test]
fn stationary_start_mean_matches_pi_g() {
    let q = three_state_example();
    let pi = stationary_distribution(&q).unwrap();
    let g = ObservableFunction::indicator(3, 2).unwrap();
    let reps = 20_000u64;
    let avgs = simulate_time_averages(&q, &g, pi.as_slice(), 20.0, reps, 31, DEFAULT_JUMP_CAP).unwrap();
    let mean = avgs.iter().sum::<f64>() / reps as f64;
    assert!((mean - 5.0 / 9.0).abs() <= 4.0 / (reps as f64).sqrt(), "mean {mean}");
}

#[test]
fn tail_estimate_from_point_mass_start() {
    let q = three_state_example();
    let g = ObservableFunction::indicator(3, 2).unwrap();
    let est = tail_probability_mc(&q, &g, &[1.0, 0.0, 0.0], 20.0, 0.1, 5_000, 3).unwrap();
    assert!(0.0 <= est.p_hat && est.p_hat <= est.ci_upper && est.ci_upper <= 1.0);
    assert_eq!(est.reps, 5_000);
    assert_eq!(est.seed, 3);
    // Starting outside state 2 only lowers the early occupation of state 2.
    let stationary = tail_probability_mc(&q, &g, &[1.0 / 3.0, 1.0 / 9.0, 5.0 / 9.0], 20.0, 0.1, 5_000, 3).unwrap();
    assert!(est.p_hat <= stationary.p_hat + 0.05);
    let json = serde_json::to_value(&est).unwrap();
    for key in ["p_hat", "reps", "ci_upper", "seed", "epsilon", "t"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}
