//! Simulation-based selection of the penalty levels.
//!
//! The score process at a candidate threshold is
//!
//! ```text
//!     Lambda(tau) = max_j | n^-1 sum_i X_ij(tau) (gamma - 1{U_i <= gamma}) | / D_j(tau)
//! ```
//!
//! with `U_i` i.i.d. uniform. Step 1 uses `kappa = c1` times the upper
//! `eps_star` quantile of `sup_tau Lambda(tau)`, Step 3a uses `omega` from the
//! same quantile of `Lambda(tau_hat)`, and Step 3b uses `mu = c2 * omega`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{column_weights, Dataset};
use crate::rng::{purpose, substream};
use crate::stats::upper_order_statistic;

pub const DEFAULT_C1: f64 = 1.1;
pub const DEFAULT_EPS_STAR: f64 = 0.1;
pub const DEFAULT_SIMS: usize = 1000;
/// Smallest number of simulated draws accepted by [`TuningConfig`].
pub const MIN_SIMS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct TuningConfig {
    pub c1: f64,
    /// Multiplier for `mu`; `None` means `ln(ln(n))`.
    pub c2: Option<f64>,
    pub eps_star: f64,
    pub n_sims: usize,
    pub seed: u64,
    /// Draw the uniforms for `omega` from the same streams as for `kappa`, so
    /// that `Lambda(tau_hat) <= sup Lambda` holds draw by draw.
    pub shared_draws: bool,
    pub execution: Execution,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            c1: DEFAULT_C1,
            c2: None,
            eps_star: DEFAULT_EPS_STAR,
            n_sims: DEFAULT_SIMS,
            seed: 0,
            shared_draws: true,
            execution: Execution::default(),
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1.is_finite() && self.c1 > 0.0) {
            return Err(Error::invalid(format!("c1 must be positive, got {}", self.c1)));
        }
        if let Some(c2) = self.c2 {
            if !(c2.is_finite() && c2 > 0.0) {
                return Err(Error::invalid(format!("c2 must be positive, got {c2}")));
            }
        }
        if !(self.eps_star > 0.0 && self.eps_star < 1.0) {
            return Err(Error::invalid(format!("eps_star must lie in (0, 1), got {}", self.eps_star)));
        }
        if self.n_sims < MIN_SIMS {
            return Err(Error::invalid(format!("n_sims must be at least {MIN_SIMS}, got {}", self.n_sims)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaProcess {
    pub sup: f64,
    pub per_tau: Vec<f64>,
}

/// Precomputed pieces for evaluating `Lambda` at a fixed set of thresholds.
struct ScoreProcess<'a> {
    data: &'a Dataset,
    /// Thresholds in descending order, with their position in the caller's slice.
    taus_desc: Vec<(usize, f64)>,
    /// Rows sorted by descending `q`.
    rows_desc: Vec<usize>,
    base_weights: Vec<f64>,
    /// `D_{p+j}(tau)` per threshold, in the caller's order.
    shift_weights: Vec<Vec<f64>>,
}

impl<'a> ScoreProcess<'a> {
    fn new(data: &'a Dataset, taus: &[f64]) -> Self {
        let p = data.p();
        let mut taus_desc: Vec<(usize, f64)> = taus.iter().copied().enumerate().collect();
        taus_desc.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut rows_desc: Vec<usize> = (0..data.n()).collect();
        rows_desc.sort_by(|&a, &b| data.q()[b].total_cmp(&data.q()[a]).then(a.cmp(&b)));
        let base_weights = column_weights(data, f64::INFINITY)[..p].to_vec();
        let shift_weights = taus.iter().map(|&t| column_weights(data, t)[p..].to_vec()).collect();
        Self { data, taus_desc, rows_desc, base_weights, shift_weights }
    }

    /// `Lambda(tau_k)` for every threshold given the score multipliers `m_i`.
    fn eval(&self, mult: &[f64]) -> Vec<f64> {
        let data = self.data;
        let (n, p) = (data.n(), data.p());
        let inv_n = 1.0 / n as f64;
        let mut base = vec![0.0; p];
        for i in 0..n {
            for (b, &x) in base.iter_mut().zip(data.row(i)) {
                *b += x * mult[i];
            }
        }
        let base_max = ratio_max(&base, &self.base_weights, inv_n);

        let mut out = vec![0.0; self.shift_weights.len()];
        let mut above = vec![0.0; p];
        let mut next = 0;
        for &(k, tau) in &self.taus_desc {
            while next < n && data.q()[self.rows_desc[next]] > tau {
                let i = self.rows_desc[next];
                for (a, &x) in above.iter_mut().zip(data.row(i)) {
                    *a += x * mult[i];
                }
                next += 1;
            }
            out[k] = base_max.max(ratio_max(&above, &self.shift_weights[k], inv_n));
        }
        out
    }
}

fn ratio_max(sums: &[f64], weights: &[f64], inv_n: f64) -> f64 {
    sums.iter()
        .zip(weights)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&s, &d)| (s * inv_n).abs() / d)
        .fold(0.0, f64::max)
}

fn multipliers(uniforms: &[f64], gamma: f64) -> Vec<f64> {
    uniforms.iter().map(|&u| if u <= gamma { gamma - 1.0 } else { gamma }).collect()
}

/// `Lambda(tau)` at each of `taus` for one vector of uniform draws.
pub fn lambda_process(data: &Dataset, taus: &[f64], uniforms: &[f64]) -> Result<LambdaProcess> {
    if uniforms.len() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: uniforms.len() });
    }
    if uniforms.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(Error::invalid("uniform draws must lie in [0, 1]"));
    }
    if taus.is_empty() {
        return Err(Error::invalid("lambda process needs at least one threshold"));
    }
    let per_tau = ScoreProcess::new(data, taus).eval(&multipliers(uniforms, data.gamma()));
    let sup = per_tau.iter().copied().fold(0.0, f64::max);
    Ok(LambdaProcess { sup, per_tau })
}

fn draw_uniforms(n: usize, seed: u64, stream: u64, sim: usize) -> Vec<f64> {
    let mut rng = substream(seed, &[stream, sim as u64]);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// `sup_tau Lambda(tau)` over `taus` for each of `n_sims` simulated draws.
pub fn simulate_sup(data: &Dataset, taus: &[f64], cfg: &TuningConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if taus.is_empty() {
        return Err(Error::invalid("lambda process needs at least one threshold"));
    }
    let proc = ScoreProcess::new(data, taus);
    let gamma = data.gamma();
    Ok(cfg.execution.map(cfg.n_sims, |s| {
        let u = draw_uniforms(data.n(), cfg.seed, purpose::TUNE_KAPPA, s);
        proc.eval(&multipliers(&u, gamma)).into_iter().fold(0.0, f64::max)
    }))
}

/// `Lambda(tau)` at a single threshold for each simulated draw.
pub fn simulate_at(data: &Dataset, tau: f64, cfg: &TuningConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let proc = ScoreProcess::new(data, &[tau]);
    let gamma = data.gamma();
    let stream = if cfg.shared_draws { purpose::TUNE_KAPPA } else { purpose::TUNE_OMEGA };
    Ok(cfg.execution.map(cfg.n_sims, |s| {
        let u = draw_uniforms(data.n(), cfg.seed, stream, s);
        proc.eval(&multipliers(&u, gamma))[0]
    }))
}

/// `c1` times the order statistic at `ceil((1 - eps_star) * draws.len())`.
pub fn penalty_from_draws(draws: &[f64], c1: f64, eps_star: f64) -> f64 {
    c1 * upper_order_statistic(draws, 1.0 - eps_star)
}

pub fn select_kappa(data: &Dataset, taus: &[f64], cfg: &TuningConfig) -> Result<f64> {
    Ok(penalty_from_draws(&simulate_sup(data, taus, cfg)?, cfg.c1, cfg.eps_star))
}

pub fn select_omega(data: &Dataset, tau_hat: f64, cfg: &TuningConfig) -> Result<f64> {
    Ok(penalty_from_draws(&simulate_at(data, tau_hat, cfg)?, cfg.c1, cfg.eps_star))
}

/// `ln(ln(n))`, defined only for `n > e`.
pub fn default_c2(n: usize) -> Result<f64> {
    let c2 = (n as f64).ln().ln();
    if c2 > 0.0 {
        Ok(c2)
    } else {
        Err(Error::invalid(format!("ln(ln(n)) is not positive for n = {n}; supply c2 explicitly")))
    }
}

pub fn select_mu(omega: f64, n: usize, c2: Option<f64>) -> Result<f64> {
    let c2 = match c2 {
        Some(c) => c,
        None => default_c2(n)?,
    };
    Ok(c2 * omega)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, (i as f64 * 0.37).sin()]).collect();
        let q: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect();
        Dataset::from_rows(vec![0.0; n], &rows, q, 0.5).unwrap()
    }

    #[test]
    fn all_below_gamma_closed_form() {
        let d = toy(20);
        let taus = [0.3, 0.5];
        let lp = lambda_process(&d, &taus, &vec![0.1; 20]).unwrap();
        for (k, &tau) in taus.iter().enumerate() {
            let w = column_weights(&d, tau);
            let mut best: f64 = 0.0;
            for j in 0..4 {
                let mean: f64 = (0..20)
                    .map(|i| crate::model::augmented_row(d.row(i), d.q()[i], tau)[j])
                    .sum::<f64>()
                    / 20.0;
                best = best.max(0.5 * mean.abs() / w[j]);
            }
            assert!((lp.per_tau[k] - best).abs() < 1e-14);
        }
    }

    #[test]
    fn balanced_multipliers_vanish_on_constant_column() {
        let n = 4;
        let d = Dataset::from_rows(vec![0.0; n], &vec![vec![1.0]; n], vec![0.0, 1.0, 2.0, 3.0], 0.5).unwrap();
        let lp = lambda_process(&d, &[1.5], &[0.2, 0.9, 0.3, 0.8]).unwrap();
        assert_eq!(lp.per_tau, vec![0.0]);
    }

    #[test]
    fn single_draw_and_max_conventions() {
        assert_eq!(penalty_from_draws(&[2.0], 1.1, 0.3), 1.1 * 2.0);
        let draws: Vec<f64> = (1..=50).map(|v| v as f64).collect();
        assert_eq!(penalty_from_draws(&draws, 1.0, 1e-9), 50.0);
        assert_eq!(penalty_from_draws(&draws, 1.0, 0.1), 45.0);
    }

    #[test]
    fn mu_examples() {
        assert!((select_mu(0.1, 200, None).unwrap() - 0.1 * (200f64).ln().ln()).abs() < 1e-15);
        assert!((select_mu(0.1, 200, None).unwrap() - 0.166739).abs() < 1e-6);
        assert_eq!(select_mu(0.05, 10, Some(2.0)).unwrap(), 0.1);
        let e2 = std::f64::consts::E.powi(2);
        assert!(((e2.ln().ln()) - 2f64.ln()).abs() < 1e-15);
        assert!(select_mu(1.0, 2, None).is_err());
        assert!(default_c2(3).unwrap() > 0.0);
    }

    #[test]
    fn validation() {
        assert!(TuningConfig::default().validate().is_ok());
        assert!(TuningConfig { n_sims: 10, ..Default::default() }.validate().is_err());
        assert!(TuningConfig { eps_star: 1.0, ..Default::default() }.validate().is_err());
        assert!(TuningConfig { c1: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn shared_draws_couple_omega_and_kappa() {
        let d = toy(60);
        let taus = [0.2, 0.4, 0.6];
        let cfg = TuningConfig { n_sims: 200, seed: 3, ..Default::default() };
        let sups = simulate_sup(&d, &taus, &cfg).unwrap();
        let at = simulate_at(&d, 0.4, &cfg).unwrap();
        assert!(sups.iter().zip(&at).all(|(s, a)| a <= s));
        assert!(select_omega(&d, 0.4, &cfg).unwrap() <= select_kappa(&d, &taus, &cfg).unwrap());
    }
}
