//! Small descriptive-statistics helpers shared across modules.

/// Linear-interpolation quantile (Hyndman-Fan type 7) of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let level = level.clamp(0.0, 1.0);
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Type-7 quantile of an unsorted sample.
pub fn quantile(values: &[f64], level: f64) -> f64 {
    quantile_sorted(&sorted_copy(values), level)
}

/// Order statistic at 1-based index `ceil(level * len)`, clamped to `[1, len]`.
/// Products within 1e-9 of an integer are treated as that integer, so
/// `(1 - 0.1) * 1000` selects the 900th value.
pub fn upper_order_statistic(values: &[f64], level: f64) -> f64 {
    assert!(!values.is_empty(), "order statistic of empty sample");
    let sorted = sorted_copy(values);
    let k = ((level * sorted.len() as f64 - 1e-9).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}
