//! Confidence intervals for the change point from the compound Poisson limit
//! of `n (tau_hat - tau0)`.
//!
//! The limit process is
//!
//! ```text
//!     M(h) = sum_{i <= N1(-h)} rho1_i 1{h < 0} + sum_{i <= N2(h)} rho2_i 1{h >= 0}
//! ```
//!
//! where `N1`, `N2` are independent Poisson processes with rate `f_Q(tau0)` and
//! the jump sizes are drawn from the empirical distributions of
//! `rho(u - x'delta) - rho(u)` and `rho(u + x'delta) - rho(u)`. Each bootstrap
//! draw is the smallest minimizer of a simulated path.

use rand::Rng;
use statrs::distribution::{Continuous, Normal};

use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::exec::Execution;
use crate::model::{check_loss, CoefVector, Dataset};
use crate::rng::{purpose, substream};
use crate::stats::{quantile_sorted, sample_sd, sorted_copy};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_DRAWS: usize = 1000;
pub const DEFAULT_H_BAR: f64 = 0.5;
pub const MIN_DRAWS: usize = 100;

/// Which fitted coefficients supply residuals and `delta` for the jump pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolSource {
    /// Step-1 coefficients at the Step-1 threshold.
    #[default]
    Step1,
    Step3a,
    Step3b,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CIConfig {
    pub level: f64,
    /// Number of simulated paths.
    pub draws: usize,
    /// Each side of the path covers `(0, h_bar * n]`.
    pub h_bar: f64,
    pub seed: u64,
    pub bandwidth: Option<f64>,
    pub pools: PoolSource,
    pub execution: Execution,
}

impl Default for CIConfig {
    fn default() -> Self {
        Self {
            level: DEFAULT_LEVEL,
            draws: DEFAULT_DRAWS,
            h_bar: DEFAULT_H_BAR,
            seed: 0,
            bandwidth: None,
            pools: PoolSource::default(),
            execution: Execution::default(),
        }
    }
}

impl CIConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.draws < MIN_DRAWS {
            return Err(Error::invalid(format!("at least {MIN_DRAWS} draws are required, got {}", self.draws)));
        }
        if !(self.h_bar.is_finite() && self.h_bar > 0.0) {
            return Err(Error::invalid(format!("h_bar must be positive, got {}", self.h_bar)));
        }
        if let Some(b) = self.bandwidth {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::invalid(format!("bandwidth must be positive, got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompoundPoissonDraw {
    /// Smallest minimizer of the path.
    pub h: f64,
    /// `M(h)` at the minimizer; never positive since `M(0) = 0`.
    pub value: f64,
    /// The minimizer is the last simulated jump on its side, so the path may
    /// keep decreasing past the horizon.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub tau_hat: f64,
    pub level: f64,
    pub rate: f64,
    pub bandwidth: f64,
    /// Simulated minimizers, in draw order.
    pub draws: Vec<f64>,
    pub saturated: usize,
}

/// `1.06 min(s, IQR / 1.34) n^(-1/5)`.
pub fn rule_of_thumb_bandwidth(q: &[f64]) -> Result<f64> {
    if q.len() < 2 {
        return Err(Error::invalid("bandwidth needs at least two observations"));
    }
    let sorted = sorted_copy(q);
    let s = sample_sd(&sorted);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = match (s > 0.0, iqr > 0.0) {
        (true, true) => s.min(iqr / 1.34),
        (true, false) => s,
        (false, true) => iqr / 1.34,
        (false, false) => return Err(Error::invalid("bandwidth is zero: all threshold values are equal")),
    };
    Ok(1.06 * spread * (q.len() as f64).powf(-0.2))
}

/// Normal-kernel density estimate of `q` at `at`.
pub fn kde_rate(q: &[f64], at: f64, bandwidth: Option<f64>) -> Result<f64> {
    let h = match bandwidth {
        Some(h) if h.is_finite() && h > 0.0 => h,
        Some(h) => return Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
        None => rule_of_thumb_bandwidth(q)?,
    };
    let phi = Normal::standard();
    let sum: f64 = sorted_copy(q).iter().map(|&qi| phi.pdf((at - qi) / h)).sum();
    Ok(sum / (q.len() as f64 * h))
}

/// Jump times of a rate-`rate` Poisson process on `(0, horizon]`.
pub fn simulate_poisson_jumps<R: Rng + ?Sized>(rate: f64, horizon: f64, rng: &mut R) -> Vec<f64> {
    // `random` is in [0, 1), so `1 - u` lies in (0, 1] and its log is finite
    jumps_from(rate, horizon, || 1.0 - rng.random::<f64>())
}

/// Jump times from a supplied stream of uniforms `eps` in `(0, 1]`, using
/// inter-arrival times `-ln(eps) / rate`.
pub fn jumps_from(rate: f64, horizon: f64, mut eps: impl FnMut() -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut h = 0.0;
    loop {
        h += -(1.0 / rate) * eps().ln();
        if h > horizon {
            return out;
        }
        out.push(h);
    }
}

/// Jump-size pools `rho(u - x'delta) - rho(u)` and `rho(u + x'delta) - rho(u)`.
pub fn jump_magnitude_samples(residuals: &[f64], delta_proj: &[f64], gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if residuals.len() != delta_proj.len() {
        return Err(Error::DimensionMismatch { expected: residuals.len(), got: delta_proj.len() });
    }
    let rho1 = residuals
        .iter()
        .zip(delta_proj)
        .map(|(&u, &d)| check_loss(u - d, gamma) - check_loss(u, gamma))
        .collect();
    let rho2 = residuals
        .iter()
        .zip(delta_proj)
        .map(|(&u, &d)| check_loss(u + d, gamma) - check_loss(u, gamma))
        .collect();
    Ok((rho1, rho2))
}

/// Simulates one two-sided path and returns its smallest minimizer.
pub fn simulate_path_minimizer<R: Rng + ?Sized>(
    rate: f64,
    rho1_pool: &[f64],
    rho2_pool: &[f64],
    horizon: f64,
    rng: &mut R,
) -> CompoundPoissonDraw {
    assert!(!rho1_pool.is_empty() && !rho2_pool.is_empty(), "jump pools must be nonempty");
    let left = simulate_poisson_jumps(rate, horizon, rng);
    let left_sizes: Vec<f64> = left.iter().map(|_| rho1_pool[rng.random_range(0..rho1_pool.len())]).collect();
    let right = simulate_poisson_jumps(rate, horizon, rng);
    let right_sizes: Vec<f64> = right.iter().map(|_| rho2_pool[rng.random_range(0..rho2_pool.len())]).collect();
    path_minimizer(&left, &left_sizes, &right, &right_sizes)
}

/// Smallest minimizer of the path defined by jump times and sizes on each side.
///
/// Candidates are scanned from the far left: `-t_K, ..., -t_1, 0, t_1, ..., t_K`.
pub fn path_minimizer(left: &[f64], left_sizes: &[f64], right: &[f64], right_sizes: &[f64]) -> CompoundPoissonDraw {
    let cum = |sizes: &[f64]| {
        sizes
            .iter()
            .scan(0.0, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect::<Vec<f64>>()
    };
    let lcum = cum(left_sizes);
    let rcum = cum(right_sizes);

    let mut best = CompoundPoissonDraw { h: 0.0, value: f64::INFINITY, saturated: false };
    let mut consider = |h: f64, v: f64, last: bool| {
        if v < best.value {
            best = CompoundPoissonDraw { h, value: v, saturated: last };
        }
    };
    for k in (0..left.len()).rev() {
        consider(-left[k], lcum[k], k + 1 == left.len());
    }
    consider(0.0, 0.0, false);
    for k in 0..right.len() {
        consider(right[k], rcum[k], k + 1 == right.len());
    }
    best
}

/// Interval `[tau_hat + Q_lo(h) / n, tau_hat + Q_hi(h) / n]` from simulated
/// minimizers, with type-7 quantiles.
pub fn interval_from_draws(tau_hat: f64, n: usize, draws: &[f64], level: f64) -> (f64, f64) {
    let sorted = sorted_copy(draws);
    let a = (1.0 - level) / 2.0;
    let nf = n as f64;
    (tau_hat + quantile_sorted(&sorted, a) / nf, tau_hat + quantile_sorted(&sorted, 1.0 - a) / nf)
}

/// Simulates the interval from given jump pools. The pools are sorted first so
/// the result does not depend on row order.
pub fn interval_from_pools(
    tau_hat: f64,
    n: usize,
    rate: f64,
    rho1: &[f64],
    rho2: &[f64],
    cfg: &CIConfig,
) -> Result<(f64, f64, Vec<f64>, usize)> {
    cfg.validate()?;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::invalid(format!("jump rate must be positive, got {rate}")));
    }
    if rho1.is_empty() || rho2.is_empty() {
        return Err(Error::invalid("jump pools must be nonempty"));
    }
    let rho1 = sorted_copy(rho1);
    let rho2 = sorted_copy(rho2);
    let horizon = cfg.h_bar * n as f64;
    let sims = cfg.execution.map(cfg.draws, |b| {
        let mut rng = substream(cfg.seed, &[purpose::CI, b as u64]);
        simulate_path_minimizer(rate, &rho1, &rho2, horizon, &mut rng)
    });
    let draws: Vec<f64> = sims.iter().map(|d| d.h).collect();
    let saturated = sims.iter().filter(|d| d.saturated).count();
    let (lo, hi) = interval_from_draws(tau_hat, n, &draws, cfg.level);
    Ok((lo, hi, draws, saturated))
}

/// Residuals at `tau` and `x'delta` for the pools.
pub fn pool_inputs(data: &Dataset, coef: &CoefVector, tau: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let resid = data.residuals(coef, tau)?;
    let (_, xd) = data.projections(coef);
    Ok((resid, xd))
}

/// Confidence interval for the change point of a fitted model.
pub fn confidence_interval(data: &Dataset, fit: &FitResult, cfg: &CIConfig) -> Result<ConfidenceInterval> {
    cfg.validate()?;
    let tau_hat = fit
        .final_tau
        .ok_or_else(|| Error::NoChangePoint("CI undefined when the Step-3b delta is zero".into()))?;
    let (coef, at) = match cfg.pools {
        PoolSource::Step1 => (&fit.step1.model.coef, fit.step1.model.tau),
        PoolSource::Step3a => (&fit.step3a.coef, fit.step3_tau),
        PoolSource::Step3b => (&fit.step3b.coef, fit.step3_tau),
    };
    confidence_interval_at(data, coef, at, tau_hat, cfg)
}

/// Confidence interval centred at `tau_hat` with pools from `coef` evaluated at `pool_tau`.
pub fn confidence_interval_at(
    data: &Dataset,
    coef: &CoefVector,
    pool_tau: f64,
    tau_hat: f64,
    cfg: &CIConfig,
) -> Result<ConfidenceInterval> {
    cfg.validate()?;
    let (resid, xd) = pool_inputs(data, coef, pool_tau)?;
    if xd.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("jump pools are degenerate: x'delta is zero for every row".into()));
    }
    let (rho1, rho2) = jump_magnitude_samples(&resid, &xd, data.gamma())?;
    let bandwidth = match cfg.bandwidth {
        Some(b) => b,
        None => rule_of_thumb_bandwidth(data.q())?,
    };
    let rate = kde_rate(data.q(), tau_hat, Some(bandwidth))?;
    let (lo, hi, draws, saturated) = interval_from_pools(tau_hat, data.n(), rate, &rho1, &rho2, cfg)?;
    Ok(ConfidenceInterval { lo, hi, tau_hat, level: cfg.level, rate, bandwidth, draws, saturated })
}
