use cpqr::estimator::{fit, step1, FitConfig, PenaltyPlan};
use cpqr::tuning::TuningConfig;
use cpqr::{column_weights, solve_penalized_qr, Dataset, Execution, PenaltySpec, SolveOptions, ThresholdGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `y = 1 + x + 2 x 1{q > 0.5}` with optional uniform noise.
fn threshold_data(seed: u64, n: usize, noise: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0, rng.random_range(-2.0..2.0)]).collect();
    let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y = (0..n)
        .map(|i| {
            let x = rows[i][1];
            1.0 + x + if q[i] > 0.5 { 2.0 * x } else { 0.0 } + noise * rng.random_range(-1.0..1.0)
        })
        .collect();
    Dataset::from_rows(y, &rows, q, 0.5).unwrap()
}

#[test]
fn noiseless_change_point_is_recovered_at_the_left_grid_neighbour() {
    let data = threshold_data(1, 120, 0.0);
    let grid = ThresholdGrid::observed(data.q(), 0.15, 0.85).unwrap();
    let cfg = FitConfig::new(grid.clone(), PenaltyPlan::fixed(1e-4, 1e-4, 1e-4));
    let f = fit(&data, &cfg).unwrap();
    let want = grid.points().iter().copied().filter(|&t| t <= 0.5).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(f.step2_tau, want);
    assert_eq!(f.final_tau, Some(want));
    let b = f.step3a_coef();
    assert!((b.delta[1] - 2.0).abs() < 0.05, "{:?}", b);
}

#[test]
fn singleton_grid_step1_equals_a_direct_solve() {
    let data = threshold_data(2, 80, 0.5);
    let tau = data.q()[7];
    let grid = ThresholdGrid::from_points(vec![tau], data.q()).unwrap();
    let opts = SolveOptions::default();
    let s1 = step1(&data, &grid, 0.03, &opts, Execution::Sequential).unwrap();
    let direct = solve_penalized_qr(&data, tau, &PenaltySpec::new(0.03, column_weights(&data, tau)).unwrap(), &opts).unwrap();
    assert_eq!(s1.model.tau, tau);
    assert!((s1.report.objective - direct.objective).abs() < 1e-9);
}

#[test]
fn dominating_penalties_declare_no_change_point() {
    let data = threshold_data(3, 60, 0.3);
    let grid = ThresholdGrid::observed(data.q(), 0.15, 0.85).unwrap();
    let f = fit(&data, &FitConfig::new(grid, PenaltyPlan::fixed(1e3, 1e3, 1e3))).unwrap();
    assert!(f.skipped_step2);
    assert!(f.no_change);
    assert_eq!(f.final_tau, None);
    assert!(f.step3b_coef().delta_is_zero());
}

#[test]
fn tuned_fit_is_reproducible_and_orders_the_levels() {
    let data = threshold_data(4, 100, 0.5);
    let grid = ThresholdGrid::observed(data.q(), 0.15, 0.85).unwrap();
    let tuning = TuningConfig { n_sims: 200, seed: 17, ..TuningConfig::default() };
    let cfg = FitConfig::new(grid, PenaltyPlan::tuned(tuning));
    let a = fit(&data, &cfg).unwrap();
    let b = fit(&data, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.omega <= a.kappa);
    assert!((a.mu - (100f64).ln().ln() * a.omega).abs() < 1e-15);
    assert!(a.scad_weights.iter().all(|w| (0.0..=1.0).contains(w)));
}

#[test]
fn iteration_converges_on_a_clear_signal() {
    let data = threshold_data(5, 100, 0.2);
    let grid = ThresholdGrid::observed(data.q(), 0.15, 0.85).unwrap();
    let mut cfg = FitConfig::new(grid, PenaltyPlan::fixed(0.02, 0.02, 0.04));
    cfg.iterate = true;
    let f = fit(&data, &cfg).unwrap();
    assert!(f.outer_converged);
    assert!(f.outer_iterations >= 1);
    assert_eq!(f.tau_from_3b, Some(f.step3_tau));
}
