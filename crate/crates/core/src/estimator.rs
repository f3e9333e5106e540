//! The three-step estimator.
//!
//! 1. Lasso-type fit at every grid threshold with weights `D_j(tau)` and level
//!    `kappa`; the penalized objective is minimized jointly over the grid.
//! 2. The change point is re-estimated by minimizing the unpenalized empirical
//!    risk of the Step-1 coefficients over the grid.
//! 3. At the Step-2 threshold, (a) a refit with level `omega`, and (b) a
//!    SCAD-weighted refit with level `mu`.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{column_weights, risk_profile, CoefVector, Dataset, ThresholdGrid, ThresholdedModel};
use crate::solver::{solve_penalized_qr, PenaltySpec, SolveOptions, SolveReport, SolveStatus};
use crate::tuning::{select_kappa, select_mu, select_omega, TuningConfig};

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_MAX_OUTER_ITER: usize = 10;

/// Consecutive grid points solved sequentially with warm starts. Chunks are
/// fixed in size so results do not depend on the number of workers.
const WARM_CHUNK: usize = 8;

/// Penalty levels; `None` entries are selected by simulation with `tuning`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyPlan {
    pub kappa: Option<f64>,
    pub omega: Option<f64>,
    /// When `None`, `mu = c2 * omega`.
    pub mu: Option<f64>,
    pub tuning: TuningConfig,
}

impl PenaltyPlan {
    pub fn fixed(kappa: f64, omega: f64, mu: f64) -> Self {
        Self { kappa: Some(kappa), omega: Some(omega), mu: Some(mu), tuning: TuningConfig::default() }
    }

    pub fn tuned(tuning: TuningConfig) -> Self {
        Self { kappa: None, omega: None, mu: None, tuning }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa", self.kappa), ("omega", self.omega), ("mu", self.mu)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if self.kappa.is_none() || self.omega.is_none() || self.mu.is_none() {
            self.tuning.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub grid: ThresholdGrid,
    pub plan: PenaltyPlan,
    pub scad_a: f64,
    /// Alternate Step 2 (with the Step-3b coefficients) and Step 3 until the
    /// threshold stops changing.
    pub iterate: bool,
    pub max_outer_iter: usize,
    pub solver: SolveOptions,
    pub execution: Execution,
}

impl FitConfig {
    pub fn new(grid: ThresholdGrid, plan: PenaltyPlan) -> Self {
        Self {
            grid,
            plan,
            scad_a: DEFAULT_SCAD_A,
            iterate: false,
            max_outer_iter: DEFAULT_MAX_OUTER_ITER,
            solver: SolveOptions::default(),
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        if !(self.scad_a.is_finite() && self.scad_a > 1.0) {
            return Err(Error::invalid(format!("scad_a must exceed 1, got {}", self.scad_a)));
        }
        if self.max_outer_iter == 0 {
            return Err(Error::invalid("max_outer_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step1Result {
    pub model: ThresholdedModel,
    pub report: SolveReport,
    /// Penalized objective per grid point; `None` where the solve was degenerate.
    pub trace: Vec<Option<f64>>,
    pub kkt: Vec<Option<f64>>,
    /// Grid indices dropped because the solve was degenerate.
    pub excluded: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kappa: f64,
    pub omega: f64,
    pub mu: f64,
    pub step1: Step1Result,
    /// Step-2 threshold, equal to the Step-1 threshold when Step 2 was skipped.
    pub step2_tau: f64,
    pub skipped_step2: bool,
    pub step3a: SolveReport,
    pub step3b: SolveReport,
    pub scad_weights: Vec<f64>,
    /// Threshold used for the reported Step-3 fits.
    pub step3_tau: f64,
    /// Threshold re-estimated from the Step-3a / Step-3b coefficients
    /// (`None` when that delta is exactly zero).
    pub tau_from_3a: Option<f64>,
    pub tau_from_3b: Option<f64>,
    /// `None` when no change point is declared.
    pub final_tau: Option<f64>,
    pub no_change: bool,
    pub outer_iterations: usize,
    /// False when the outer loop stopped at `max_outer_iter` with the threshold
    /// still moving.
    pub outer_converged: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn step3a_coef(&self) -> &CoefVector {
        &self.step3a.coef
    }

    pub fn step3b_coef(&self) -> &CoefVector {
        &self.step3b.coef
    }
}

fn weighted_penalty(data: &Dataset, tau: f64, lambda: f64) -> Result<PenaltySpec> {
    PenaltySpec::new(lambda, column_weights(data, tau))
}

/// Joint minimization of the penalized objective over `grid`.
pub fn step1(data: &Dataset, grid: &ThresholdGrid, kappa: f64, solver: &SolveOptions, exec: Execution) -> Result<Step1Result> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    let taus = grid.points();
    let chunks = taus.len().div_ceil(WARM_CHUNK);
    let solved: Vec<Result<Vec<SolveReport>>> = exec.map(chunks, |c| {
        let mut out = Vec::with_capacity(WARM_CHUNK);
        let mut warm: Option<CoefVector> = None;
        for &tau in &taus[c * WARM_CHUNK..((c + 1) * WARM_CHUNK).min(taus.len())] {
            let opts = SolveOptions { warm_start: warm.take(), ..solver.clone() };
            let rep = solve_penalized_qr(data, tau, &weighted_penalty(data, tau, kappa)?, &opts)?;
            if rep.status != SolveStatus::Degenerate {
                warm = Some(rep.coef.clone());
            }
            out.push(rep);
        }
        Ok(out)
    });
    let mut reports = Vec::with_capacity(taus.len());
    for chunk in solved {
        reports.extend(chunk?);
    }
    let usable = |r: &SolveReport| r.status != SolveStatus::Degenerate;
    let trace: Vec<Option<f64>> = reports.iter().map(|r| usable(r).then_some(r.objective)).collect();
    let kkt = reports.iter().map(|r| usable(r).then_some(r.kkt_residual)).collect();
    let excluded = (0..taus.len()).filter(|&k| trace[k].is_none()).collect();
    let values: Vec<f64> = trace.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let best = ThresholdGrid::first_argmin(&values)
        .ok_or_else(|| Error::Degenerate("every grid point gave a degenerate Step-1 solve".into()))?;
    let report = reports.swap_remove(best);
    Ok(Step1Result {
        model: ThresholdedModel { coef: report.coef.clone(), tau: taus[best] },
        report,
        trace,
        kkt,
        excluded,
    })
}

/// Smallest minimizer over `grid` of the empirical risk of `coef`, or `None`
/// when `coef.delta` is exactly zero.
pub fn step2(data: &Dataset, coef: &CoefVector, grid: &ThresholdGrid) -> Result<Option<f64>> {
    data.check_coef(coef)?;
    if coef.delta_is_zero() {
        return Ok(None);
    }
    let risk = risk_profile(data, coef, grid.points())?;
    Ok(ThresholdGrid::first_argmin(&risk).map(|k| grid.points()[k]))
}

/// Local linear approximation weights of the SCAD penalty.
pub fn scad_weights(coef: &CoefVector, mu: f64, a: f64) -> Vec<f64> {
    (0..coef.len())
        .map(|j| {
            let v = coef.alpha(j).abs();
            if v < mu {
                1.0
            } else if v > a * mu {
                0.0
            } else {
                (a * mu - v) / (mu * (a - 1.0))
            }
        })
        .collect()
}

pub fn step3a(data: &Dataset, tau_hat: f64, omega: f64, solver: &SolveOptions) -> Result<SolveReport> {
    solve_penalized_qr(data, tau_hat, &weighted_penalty(data, tau_hat, omega)?, solver)
}

pub fn step3b(
    data: &Dataset,
    tau_hat: f64,
    mu: f64,
    coef_step3a: &CoefVector,
    scad_a: f64,
    solver: &SolveOptions,
) -> Result<(SolveReport, Vec<f64>)> {
    let w = scad_weights(coef_step3a, mu, scad_a);
    let d = column_weights(data, tau_hat);
    let weights = w.iter().zip(&d).map(|(a, b)| a * b).collect();
    let rep = solve_penalized_qr(data, tau_hat, &PenaltySpec::new(mu, weights)?, solver)?;
    Ok((rep, w))
}

fn note_status(warnings: &mut Vec<String>, step: &str, rep: &SolveReport) {
    match rep.status {
        SolveStatus::Converged => {}
        SolveStatus::MaxIter => warnings.push(format!("{step}: solver hit the iteration limit")),
        SolveStatus::Degenerate => warnings.push(format!("{step}: degenerate design at the chosen threshold")),
    }
}

/// Runs the full pipeline.
pub fn fit(data: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let plan = &cfg.plan;
    let kappa = match plan.kappa {
        Some(k) => k,
        None => select_kappa(data, cfg.grid.points(), &plan.tuning)?,
    };
    let levels_at = |tau: f64| -> Result<(f64, f64)> {
        let omega = match plan.omega {
            Some(w) => w,
            None => select_omega(data, tau, &plan.tuning)?,
        };
        let mu = match plan.mu {
            Some(m) => m,
            None => select_mu(omega, data.n(), plan.tuning.c2)?,
        };
        Ok((omega, mu))
    };

    let mut warnings = Vec::new();
    let s1 = step1(data, &cfg.grid, kappa, &cfg.solver, cfg.execution)?;
    for &k in &s1.excluded {
        warnings.push(format!("step 1: grid point {} excluded (degenerate solve)", cfg.grid.points()[k]));
    }
    let s2 = step2(data, &s1.model.coef, &cfg.grid)?;
    let skipped_step2 = s2.is_none();
    let step2_tau = s2.unwrap_or(s1.model.tau);

    let mut tau = step2_tau;
    let mut rerun_pending = skipped_step2;
    let mut outer_iterations = 0;
    let mut outer_converged = true;
    let mut warm = s1.model.coef.clone();
    let (omega, mu, r3a, r3b, w) = loop {
        outer_iterations += 1;
        let (omega, mu) = levels_at(tau)?;
        let warm_opts = SolveOptions { warm_start: Some(warm.clone()), ..cfg.solver.clone() };
        let r3a = step3a(data, tau, omega, &warm_opts)?;
        let warm_opts = SolveOptions { warm_start: Some(r3a.coef.clone()), ..cfg.solver.clone() };
        let (r3b, w) = step3b(data, tau, mu, &r3a.coef, cfg.scad_a, &warm_opts)?;
        if !(cfg.iterate || rerun_pending) {
            break (omega, mu, r3a, r3b, w);
        }
        let Some(next) = step2(data, &r3b.coef, &cfg.grid)? else { break (omega, mu, r3a, r3b, w) };
        rerun_pending = false;
        if next == tau {
            break (omega, mu, r3a, r3b, w);
        }
        if outer_iterations >= cfg.max_outer_iter {
            outer_converged = false;
            warnings.push(format!("outer iteration stopped after {outer_iterations} passes"));
            break (omega, mu, r3a, r3b, w);
        }
        warm = r3b.coef.clone();
        tau = next;
    };
    note_status(&mut warnings, "step 3a", &r3a);
    note_status(&mut warnings, "step 3b", &r3b);

    let tau_from_3a = step2(data, &r3a.coef, &cfg.grid)?;
    let tau_from_3b = step2(data, &r3b.coef, &cfg.grid)?;
    let no_change = skipped_step2 && r3b.coef.delta_is_zero();
    Ok(FitResult {
        kappa,
        omega,
        mu,
        step1: s1,
        step2_tau,
        skipped_step2,
        step3a: r3a,
        step3b: r3b,
        scad_weights: w,
        step3_tau: tau,
        tau_from_3a,
        tau_from_3b,
        final_tau: (!no_change).then_some(tau),
        no_change,
        outer_iterations,
        outer_converged,
        warnings,
    })
}
