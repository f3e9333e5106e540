//! Monte Carlo experiments: repeated draws from a design, the full estimation
//! pipeline, two oracle comparators, and per-step summary metrics.
//!
//! Replication `r` uses random substreams keyed by `(seed, r, purpose)`, so the
//! results do not depend on how replications are scheduled.

mod dgp;
mod metrics;

pub use dgp::{DgpSpec, ErrorDist, QDist, Sample};
pub use metrics::{excess_risk, excess_risk_mc, mse_split, prediction_error, prediction_error_mc, MseSplit};

use crate::error::{Error, Result};
use crate::estimator::{fit, FitConfig, PenaltyPlan};
use crate::exec::Execution;
use crate::inference::{confidence_interval_at, CIConfig};
use crate::model::{CoefVector, Dataset, ThresholdGrid, ThresholdedModel};
use crate::rng::{derive_seed, purpose, substream};
use crate::solver::{solve_restricted_qr, SolveOptions};
use crate::stats::mean;
use crate::tuning::TuningConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    /// Restricted fit on the true support at the true threshold.
    Oracle1,
    /// Restricted fit on the true support with the threshold searched over the grid.
    Oracle2,
    Step1,
    Step2,
    Step3a,
    Step3b,
}

impl Step {
    pub const ALL: [Step; 6] = [Step::Oracle1, Step::Oracle2, Step::Step1, Step::Step2, Step::Step3a, Step::Step3b];

    pub fn label(self) -> &'static str {
        match self {
            Step::Oracle1 => "oracle1",
            Step::Oracle2 => "oracle2",
            Step::Step1 => "step1",
            Step::Step2 => "step2",
            Step::Step3a => "step3a",
            Step::Step3b => "step3b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// n = 200, p = 50, 100 replications, 2000 evaluation draws.
    Desk,
    /// n = 200, p = 250, 1000 replications, 10000 evaluation draws.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::invalid(format!("unknown preset '{other}' (expected desk or paper)"))),
        }
    }
}

impl Preset {
    /// `(n, p, reps, eval_size)`.
    pub fn scale(self) -> (usize, usize, usize, usize) {
        match self {
            Preset::Desk => (200, 50, 100, 2000),
            Preset::Paper => (200, 250, 1000, 10_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub design: DgpSpec,
    pub reps: usize,
    /// Fresh draws used for excess risk and prediction error.
    pub eval_size: usize,
    pub seed: u64,
    /// Empirical quantile levels bounding the observation grid.
    pub grid_lower: f64,
    pub grid_upper: f64,
    /// Penalty levels; the tuning seed is replaced per replication.
    pub plan: PenaltyPlan,
    pub scad_a: f64,
    pub iterate: bool,
    /// The CI seed is replaced per replication and step.
    pub ci: CIConfig,
    /// Build Step-3 confidence intervals from Step-3 residuals instead of Step-1 ones.
    pub step3_pools: bool,
    pub solver: SolveOptions,
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(design: DgpSpec, reps: usize, eval_size: usize) -> Self {
        Self {
            design,
            reps,
            eval_size,
            seed: 0,
            grid_lower: 0.15,
            grid_upper: 0.85,
            plan: PenaltyPlan::tuned(TuningConfig::default()),
            scad_a: crate::estimator::DEFAULT_SCAD_A,
            iterate: false,
            ci: CIConfig::default(),
            step3_pools: false,
            solver: SolveOptions::default(),
            execution: Execution::default(),
        }
    }

    /// Baseline design at the preset's scale.
    pub fn preset(preset: Preset, gamma: f64) -> Self {
        let (n, p, reps, eval) = preset.scale();
        Self::new(DgpSpec::baseline(n, p, gamma), reps, eval)
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.reps == 0 || self.eval_size == 0 {
            return Err(Error::invalid("reps and eval_size must be positive"));
        }
        if !(0.0 <= self.grid_lower && self.grid_lower < self.grid_upper && self.grid_upper <= 1.0) {
            return Err(Error::invalid(format!(
                "grid levels must satisfy 0 <= lower < upper <= 1, got {} and {}",
                self.grid_lower, self.grid_upper
            )));
        }
        self.ci.validate()
    }
}

/// Metrics of one step in one replication. `None` marks a metric that does not
/// apply to the step or was not available in this replication.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub excess_risk: f64,
    pub pred_error: f64,
    pub mse: Option<MseSplit>,
    pub selected: Option<usize>,
    pub selected_delta: Option<usize>,
    pub tau_hat: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub ci_covered: Option<bool>,
    pub oracle_selected: Option<bool>,
    pub no_change: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub rep: usize,
    pub kappa: f64,
    pub omega: f64,
    pub mu: f64,
    pub steps: Vec<(Step, StepOutcome)>,
    pub warnings: Vec<String>,
}

impl ReplicationSummary {
    pub fn step(&self, step: Step) -> &StepOutcome {
        &self.steps.iter().find(|(s, _)| *s == step).expect("every step is recorded").1
    }
}

/// Aggregates of one step over the successful replications.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    pub step: Step,
    pub excess_risk: f64,
    pub excess_risk_se: f64,
    pub pred_error: f64,
    pub mse: Option<f64>,
    pub mse_active: Option<f64>,
    pub mse_inactive: Option<f64>,
    pub mean_selected: Option<f64>,
    pub mean_selected_delta: Option<f64>,
    /// RMSE of the threshold over replications that declared a change point.
    pub rmse_tau: Option<f64>,
    pub tau_count: usize,
    pub coverage: Option<f64>,
    pub ci_count: usize,
    pub oracle_prop: Option<f64>,
    pub no_change_prop: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub rows: Vec<StepSummary>,
    pub replications: Vec<ReplicationSummary>,
    /// Replications that failed, with the error message.
    pub failures: Vec<(usize, String)>,
}

impl ExperimentSummary {
    pub fn row(&self, step: Step) -> &StepSummary {
        self.rows.iter().find(|r| r.step == step).expect("every step has a row")
    }
}

/// Runs all replications and aggregates them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let results = cfg.execution.map(cfg.reps, |r| run_replication(cfg, r));
    let mut replications = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(s) => replications.push(s),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    let tau0 = cfg.design.tau0;
    let rows = Step::ALL.iter().map(|&s| summarize(s, &replications, tau0)).collect();
    Ok(ExperimentSummary { rows, replications, failures })
}

fn support(truth: &CoefVector) -> Vec<usize> {
    truth.active_set()
}

/// Oracle 2: restricted fits over the grid, keeping the smallest risk minimizer.
fn oracle2(data: &Dataset, grid: &ThresholdGrid, sup: &[usize], solver: &SolveOptions) -> Result<ThresholdedModel> {
    let mut best: Option<(f64, ThresholdedModel)> = None;
    for &tau in grid.points() {
        let rep = solve_restricted_qr(data, tau, sup, solver)?;
        if best.as_ref().is_none_or(|(v, _)| rep.objective < *v) {
            best = Some((rep.objective, ThresholdedModel { coef: rep.coef, tau }));
        }
    }
    best.map(|(_, m)| m).ok_or_else(|| Error::invalid("empty grid"))
}

/// One replication of the experiment.
pub fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<ReplicationSummary> {
    let r = rep as u64;
    let spec = &cfg.design;
    let (data, truth) = spec.generate(&mut substream(cfg.seed, &[r, purpose::DATA]))?;
    let eval = spec.sample(cfg.eval_size, &mut substream(cfg.seed, &[r, purpose::EVAL]));
    let grid = ThresholdGrid::observed(data.q(), cfg.grid_lower, cfg.grid_upper)?;

    let mut plan = cfg.plan.clone();
    plan.tuning.seed = derive_seed(cfg.seed, &[r, purpose::TUNE_KAPPA]);
    plan.tuning.execution = cfg.execution;
    let mut fit_cfg = FitConfig::new(grid.clone(), plan);
    fit_cfg.scad_a = cfg.scad_a;
    fit_cfg.iterate = cfg.iterate;
    fit_cfg.solver = cfg.solver.clone();
    fit_cfg.execution = cfg.execution;
    let fr = fit(&data, &fit_cfg)?;

    let sup = support(&truth.coef);
    let o1 = solve_restricted_qr(&data, truth.tau, &sup, &cfg.solver)?;
    let o1_model = ThresholdedModel { coef: o1.coef, tau: truth.tau };
    let shift_in_support = sup.iter().any(|&j| j >= spec.p);
    let o2_model = if shift_in_support { oracle2(&data, &grid, &sup, &cfg.solver)? } else { o1_model.clone() };

    let mut warnings = fr.warnings.clone();
    let ci_for = |step: Step, center: Option<f64>, pools: (&CoefVector, f64), warnings: &mut Vec<String>| {
        let center = center?;
        let ci_cfg = CIConfig {
            seed: derive_seed(cfg.seed, &[r, purpose::CI, step as u64]),
            execution: cfg.execution,
            ..cfg.ci.clone()
        };
        match confidence_interval_at(&data, pools.0, pools.1, center, &ci_cfg) {
            Ok(ci) => Some((ci.lo, ci.hi)),
            Err(e) => {
                warnings.push(format!("{}: CI unavailable: {e}", step.label()));
                None
            }
        }
    };

    let gamma = spec.gamma;
    let p = spec.p;
    let evaluate = |model: &ThresholdedModel| {
        (excess_risk(&eval, p, gamma, model, &truth), prediction_error(&eval, p, model, &truth))
    };
    let outcome = |model: &ThresholdedModel, tau_hat: Option<f64>, ci: Option<(f64, f64)>, selection: bool, coef_metrics: bool| {
        let (er, pe) = evaluate(model);
        let active = model.coef.active_set();
        StepOutcome {
            excess_risk: er,
            pred_error: pe,
            mse: coef_metrics.then(|| mse_split(&model.coef, &truth.coef)),
            selected: selection.then_some(active.len()),
            selected_delta: selection.then(|| active.iter().filter(|&&j| j >= p).count()),
            tau_hat,
            ci,
            ci_covered: ci.map(|(lo, hi)| lo <= truth.tau && truth.tau <= hi),
            oracle_selected: selection.then(|| active == sup),
            no_change: selection.then(|| model.coef.delta_is_zero()),
        }
    };

    let s1 = &fr.step1.model;
    let s1_pools = (&s1.coef, s1.tau);
    let s1_tau = (!s1.coef.delta_is_zero()).then_some(s1.tau);
    let step2_tau = (!fr.skipped_step2).then_some(fr.step2_tau);
    let (pools_3a, pools_3b) = if cfg.step3_pools {
        ((fr.step3a_coef(), fr.step3_tau), (fr.step3b_coef(), fr.step3_tau))
    } else {
        (s1_pools, s1_pools)
    };

    let o2_tau = shift_in_support.then_some(o2_model.tau);
    let o2_ci = ci_for(Step::Oracle2, o2_tau, (&o2_model.coef, o2_model.tau), &mut warnings);
    let ci1 = ci_for(Step::Step1, s1_tau, s1_pools, &mut warnings);
    let ci2 = ci_for(Step::Step2, step2_tau, s1_pools, &mut warnings);
    let ci3a = ci_for(Step::Step3a, fr.tau_from_3a, pools_3a, &mut warnings);
    let ci3b = ci_for(Step::Step3b, fr.tau_from_3b, pools_3b, &mut warnings);

    let m2 = ThresholdedModel { coef: s1.coef.clone(), tau: fr.step2_tau };
    let m3a = ThresholdedModel { coef: fr.step3a_coef().clone(), tau: fr.tau_from_3a.unwrap_or(fr.step3_tau) };
    let m3b = ThresholdedModel { coef: fr.step3b_coef().clone(), tau: fr.tau_from_3b.unwrap_or(fr.step3_tau) };

    let steps = vec![
        (Step::Oracle1, outcome(&o1_model, None, None, false, true)),
        (Step::Oracle2, outcome(&o2_model, o2_tau, o2_ci, false, true)),
        (Step::Step1, outcome(s1, s1_tau, ci1, true, true)),
        (Step::Step2, outcome(&m2, step2_tau, ci2, false, false)),
        (Step::Step3a, outcome(&m3a, fr.tau_from_3a, ci3a, true, true)),
        (Step::Step3b, outcome(&m3b, fr.tau_from_3b, ci3b, true, true)),
    ];
    Ok(ReplicationSummary { rep, kappa: fr.kappa, omega: fr.omega, mu: fr.mu, steps, warnings })
}

fn mean_of<T>(items: &[T], f: impl Fn(&T) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = items.iter().filter_map(f).collect();
    (!v.is_empty()).then(|| mean(&v))
}

fn summarize(step: Step, reps: &[ReplicationSummary], tau0: f64) -> StepSummary {
    let outs: Vec<&StepOutcome> = reps.iter().map(|r| r.step(step)).collect();
    let er: Vec<f64> = outs.iter().map(|o| o.excess_risk).collect();
    let (er_mean, er_se) = if er.is_empty() {
        (f64::NAN, f64::NAN)
    } else if er.len() == 1 {
        (er[0], f64::NAN)
    } else {
        (mean(&er), crate::stats::sample_sd(&er) / (er.len() as f64).sqrt())
    };
    let taus: Vec<f64> = outs.iter().filter_map(|o| o.tau_hat).collect();
    let rmse_tau = (!taus.is_empty()).then(|| mean(&taus.iter().map(|t| (t - tau0).powi(2)).collect::<Vec<_>>()).sqrt());
    let covered: Vec<f64> = outs.iter().filter_map(|o| o.ci_covered).map(|c| c as u8 as f64).collect();
    let flag = |f: &dyn Fn(&StepOutcome) -> Option<bool>| mean_of(&outs, |o| f(o).map(|b| b as u8 as f64));
    StepSummary {
        step,
        excess_risk: er_mean,
        excess_risk_se: er_se,
        pred_error: mean_of(&outs, |o| Some(o.pred_error)).unwrap_or(f64::NAN),
        mse: mean_of(&outs, |o| o.mse.map(|m| m.total)),
        mse_active: mean_of(&outs, |o| o.mse.map(|m| m.active)),
        mse_inactive: mean_of(&outs, |o| o.mse.map(|m| m.inactive)),
        mean_selected: mean_of(&outs, |o| o.selected.map(|v| v as f64)),
        mean_selected_delta: mean_of(&outs, |o| o.selected_delta.map(|v| v as f64)),
        rmse_tau,
        tau_count: taus.len(),
        coverage: (!covered.is_empty()).then(|| mean(&covered)),
        ci_count: covered.len(),
        oracle_prop: flag(&|o| o.oracle_selected),
        no_change_prop: flag(&|o| o.no_change),
    }
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "NA".into())
}

impl ExperimentSummary {
    /// One row per step.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "step,excess_risk,excess_risk_se,pred_error,mse,mse_active,mse_inactive,mean_selected,\
             mean_selected_delta,rmse_tau,tau_count,coverage,ci_count,oracle_prop,no_change_prop\n",
        );
        for r in &self.rows {
            let fields = [
                r.step.label().to_string(),
                fmt_f64(r.excess_risk),
                fmt_f64(r.excess_risk_se),
                fmt_f64(r.pred_error),
                fmt_opt(r.mse),
                fmt_opt(r.mse_active),
                fmt_opt(r.mse_inactive),
                fmt_opt(r.mean_selected),
                fmt_opt(r.mean_selected_delta),
                fmt_opt(r.rmse_tau),
                r.tau_count.to_string(),
                fmt_opt(r.coverage),
                r.ci_count.to_string(),
                fmt_opt(r.oracle_prop),
                fmt_opt(r.no_change_prop),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// One row per replication and step.
    pub fn replications_csv(&self) -> String {
        let mut out = String::from(
            "rep,step,kappa,omega,mu,excess_risk,pred_error,mse,mse_active,mse_inactive,selected,selected_delta,\
             tau_hat,ci_lo,ci_hi,ci_covered,oracle_selected,no_change\n",
        );
        let flag = |b: Option<bool>| b.map(|v| (v as u8).to_string()).unwrap_or_else(|| "NA".into());
        let count = |c: Option<usize>| c.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
        for rep in &self.replications {
            for (step, o) in &rep.steps {
                let fields = [
                    rep.rep.to_string(),
                    step.label().to_string(),
                    fmt_f64(rep.kappa),
                    fmt_f64(rep.omega),
                    fmt_f64(rep.mu),
                    fmt_f64(o.excess_risk),
                    fmt_f64(o.pred_error),
                    fmt_opt(o.mse.map(|m| m.total)),
                    fmt_opt(o.mse.map(|m| m.active)),
                    fmt_opt(o.mse.map(|m| m.inactive)),
                    count(o.selected),
                    count(o.selected_delta),
                    fmt_opt(o.tau_hat),
                    fmt_opt(o.ci.map(|c| c.0)),
                    fmt_opt(o.ci.map(|c| c.1)),
                    flag(o.ci_covered),
                    flag(o.oracle_selected),
                    flag(o.no_change),
                ];
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
        out
    }
}
