use cpqr::estimator::{fit, scad_weights, step2, FitConfig, PenaltyPlan};
use cpqr::inference::{confidence_interval_at, interval_from_draws, path_minimizer, CIConfig};
use cpqr::tuning::lambda_process;
use cpqr::{check_loss, column_weights, empirical_risk, risk_profile, CoefVector, Dataset, Execution, ThresholdGrid, ThresholdedModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(seed: u64, n: usize, p: usize, gamma: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut r = vec![1.0];
            r.extend((1..p).map(|_| rng.random_range(-2.0..2.0)));
            r
        })
        .collect();
    let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y = (0..n)
        .map(|i| rows[i][1] + if q[i] > 0.5 { rows[i][1] } else { 0.0 } + rng.random_range(-1.0..1.0))
        .collect();
    Dataset::from_rows(y, &rows, q, gamma).unwrap()
}

/// Path value `M(h)` straight from its definition.
fn path_value(h: f64, left: &[f64], ls: &[f64], right: &[f64], rs: &[f64]) -> f64 {
    if h < 0.0 {
        left.iter().zip(ls).filter(|(t, _)| **t <= -h).map(|(_, s)| s).sum()
    } else {
        right.iter().zip(rs).filter(|(t, _)| **t <= h).map(|(_, s)| s).sum()
    }
}

fn increasing_times(gaps: &[f64]) -> Vec<f64> {
    gaps.iter()
        .scan(0.0, |t, g| {
            *t += g;
            Some(*t)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn check_loss_is_nonnegative_and_zero_only_at_zero(u in -1e3f64..1e3, gamma in 0.01f64..0.99) {
        let v = check_loss(u, gamma);
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v == 0.0, u == 0.0);
        let slope = if u <= 0.0 { gamma - 1.0 } else { gamma };
        prop_assert!((v - u * slope).abs() <= 1e-12 * (1.0 + u.abs()));
    }

    #[test]
    fn shift_weights_do_not_increase_with_tau(seed in any::<u64>(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let data = dataset(seed, 30, 3, 0.5);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = column_weights(&data, lo);
        let b = column_weights(&data, hi);
        for j in 0..3 {
            prop_assert_eq!(a[j], b[j]);
            prop_assert!(b[3 + j] <= a[3 + j]);
        }
    }

    #[test]
    fn risk_is_constant_between_observed_thresholds(seed in any::<u64>(), frac in 0.0f64..1.0) {
        let data = dataset(seed, 25, 2, 0.5);
        let mut qs = data.q().to_vec();
        qs.sort_by(f64::total_cmp);
        let k = ((frac * 23.0) as usize).min(23);
        let (a, b) = (qs[k], qs[k + 1]);
        let coef = CoefVector::new(vec![0.3, -0.4], vec![0.2, 1.1]).unwrap();
        let r = risk_profile(&data, &coef, &[a, a + 0.5 * (b - a), b - 1e-12 * (b - a)]).unwrap();
        prop_assert_eq!(r[0], r[1]);
        prop_assert_eq!(r[1], r[2]);
    }

    #[test]
    fn lambda_is_invariant_to_power_of_two_rescaling(seed in any::<u64>(), exps in proptest::collection::vec(-6i32..6, 3)) {
        let data = dataset(seed, 40, 3, 0.25);
        let scale: Vec<f64> = exps.iter().map(|&e| 2f64.powi(e)).collect();
        let x: Vec<f64> = (0..40).flat_map(|i| (0..3).map(|j| data.row(i)[j] * scale[j]).collect::<Vec<_>>()).collect();
        let scaled = Dataset::new(data.y().to_vec(), x, 3, data.q().to_vec(), 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        let u: Vec<f64> = (0..40).map(|_| rng.random()).collect();
        let taus = [0.2, 0.35, 0.5, 0.8];
        let a = lambda_process(&data, &taus, &u).unwrap();
        let b = lambda_process(&scaled, &taus, &u).unwrap();
        prop_assert_eq!(a.sup, b.sup);
        prop_assert_eq!(&a.per_tau, &b.per_tau);
        for v in &a.per_tau {
            prop_assert!(*v <= a.sup);
        }
    }

    #[test]
    fn scad_weights_lie_in_unit_interval_and_do_not_increase(
        mags in proptest::collection::vec(0.0f64..5.0, 1..20),
        mu in 0.01f64..1.0,
        a in 1.1f64..6.0,
    ) {
        let mut sorted = mags.clone();
        sorted.sort_by(f64::total_cmp);
        let p = sorted.len();
        let coef = CoefVector::new(sorted.clone(), vec![0.0; p]).unwrap();
        let w = scad_weights(&coef, mu, a);
        for j in 0..p {
            prop_assert!((0.0..=1.0).contains(&w[j]));
            prop_assert_eq!(w[p + j], 1.0);
            if j > 0 {
                prop_assert!(w[j] <= w[j - 1]);
            }
        }
    }

    #[test]
    fn path_minimizer_is_the_smallest_global_minimizer(
        lgaps in proptest::collection::vec(0.01f64..2.0, 0..15),
        rgaps in proptest::collection::vec(0.01f64..2.0, 0..15),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let left = increasing_times(&lgaps);
        let right = increasing_times(&rgaps);
        let ls: Vec<f64> = left.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let rs: Vec<f64> = right.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = path_minimizer(&left, &ls, &right, &rs);
        prop_assert_eq!(path_value(0.0, &left, &ls, &right, &rs), 0.0);
        prop_assert!(d.value <= 0.0);
        prop_assert!((path_value(d.h, &left, &ls, &right, &rs) - d.value).abs() < 1e-9);
        let mut candidates: Vec<f64> = left.iter().map(|t| -t).chain(right.iter().copied()).collect();
        candidates.push(0.0);
        for h in candidates {
            let v = path_value(h, &left, &ls, &right, &rs);
            prop_assert!(v >= d.value - 1e-9);
            if h < d.h {
                prop_assert!(v > d.value);
            }
        }
    }

    #[test]
    fn interval_endpoints_are_ordered(draws in proptest::collection::vec(-50.0f64..50.0, 1..200), level in 0.5f64..0.99) {
        let (lo, hi) = interval_from_draws(0.5, 100, &draws, level);
        prop_assert!(lo <= hi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn step2_never_increases_the_empirical_risk(seed in any::<u64>()) {
        let data = dataset(seed, 60, 2, 0.5);
        let grid = ThresholdGrid::observed(data.q(), 0.15, 0.85).unwrap();
        let coef = CoefVector::new(vec![0.1, 0.9], vec![0.0, 0.8]).unwrap();
        let start = grid.points()[grid.len() / 3];
        let tau = step2(&data, &coef, &grid).unwrap().unwrap();
        let before = empirical_risk(&data, &ThresholdedModel { coef: coef.clone(), tau: start }).unwrap();
        let after = empirical_risk(&data, &ThresholdedModel { coef, tau }).unwrap();
        prop_assert!(after <= before);
    }

    #[test]
    fn interval_is_invariant_to_row_order(seed in any::<u64>()) {
        let data = dataset(seed, 50, 2, 0.5);
        let mut order: Vec<usize> = (0..50).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for i in (1..50).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let shuffled = data.permuted(&order).unwrap();
        let coef = CoefVector::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let cfg = CIConfig { draws: 200, seed, ..CIConfig::default() };
        let a = confidence_interval_at(&data, &coef, 0.5, 0.5, &cfg).unwrap();
        let b = confidence_interval_at(&shuffled, &coef, 0.5, 0.5, &cfg).unwrap();
        prop_assert_eq!((a.lo, a.hi), (b.lo, b.hi));
    }

    #[test]
    fn fit_is_deterministic_and_independent_of_scheduling(seed in any::<u64>()) {
        let data = dataset(seed, 60, 2, 0.5);
        let grid = ThresholdGrid::observed(data.q(), 0.15, 0.85).unwrap();
        let mut cfg = FitConfig::new(grid, PenaltyPlan::fixed(0.05, 0.04, 0.08));
        let a = fit(&data, &cfg).unwrap();
        let b = fit(&data, &cfg).unwrap();
        cfg.execution = Execution::Sequential;
        let c = fit(&data, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a, &c);
    }
}
