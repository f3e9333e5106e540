mod config;
mod data;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpqr::estimator::{fit, FitConfig, FitResult, PenaltyPlan};
use cpqr::harness::{fmt_f64, run_experiment, DgpSpec, ExperimentConfig, Preset};
use cpqr::inference::{confidence_interval, CIConfig, PoolSource};
use cpqr::tuning::{select_kappa, select_mu, select_omega, TuningConfig};
use cpqr::{Dataset, Execution, SolveReport, SolveStatus, ThresholdGrid};

use config::{Design, GridMode, RunConfig};
use report::{indices, opt_num, Report};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<cpqr::Error> for CliError {
    fn from(e: cpqr::Error) -> Self {
        let code = match e {
            cpqr::Error::Degenerate(_) | cpqr::Error::Solver(_) => 3,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

/// L1-penalized quantile regression with an unknown change point.
#[derive(Parser)]
#[command(name = "cpqr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the three-step estimator to a CSV file and report coefficients, threshold and CI.
    Fit {
        /// CSV with a header row; columns `y` and `q` are required, all others are covariates.
        csv: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Select the penalty levels by simulating the score process.
    Tune {
        csv: PathBuf,
        /// Threshold at which omega and mu are selected; kappa only when omitted.
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Fit and report only the change-point confidence interval.
    Ci {
        csv: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Run the Monte Carlo experiment and write summary and per-replication tables.
    Simulate {
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Args, Default)]
struct Opts {
    /// TOML configuration with dotted keys (e.g. `tuning.c1 = 1.1`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quantile level gamma in (0, 1) [default: 0.5]
    #[arg(long)]
    gamma: Option<f64>,
    /// Master random seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Lower empirical quantile level of q bounding the grid [default: 0.15]
    #[arg(long)]
    grid_lower: Option<f64>,
    /// Upper empirical quantile level of q bounding the grid [default: 0.85]
    #[arg(long)]
    grid_upper: Option<f64>,
    /// Grid construction: `obs` (observed q values) or `equispaced` [default: obs]
    #[arg(long, value_parser = config::parse_grid_mode)]
    grid_mode: Option<GridMode>,
    /// Number of points for `--grid-mode equispaced` [default: 50]
    #[arg(long)]
    grid_points: Option<usize>,
    /// Multiplier on the simulated score quantile for kappa and omega [default: 1.1]
    #[arg(long)]
    c1: Option<f64>,
    /// Multiplier giving mu = c2 * omega [default: ln(ln(n))]
    #[arg(long)]
    c2: Option<f64>,
    /// Tail probability of the simulated score quantile [default: 0.1]
    #[arg(long)]
    eps_star: Option<f64>,
    /// Number of simulated score draws [default: 1000]
    #[arg(long)]
    sims: Option<usize>,
    /// SCAD constant a > 1 [default: 3.7]
    #[arg(long)]
    scad_a: Option<f64>,
    /// Fixed Step-1 penalty level (skips its simulation) [default: tuned]
    #[arg(long)]
    kappa: Option<f64>,
    /// Fixed Step-3a penalty level [default: tuned]
    #[arg(long)]
    omega: Option<f64>,
    /// Fixed Step-3b penalty level [default: c2 * omega]
    #[arg(long)]
    mu: Option<f64>,
    /// Alternate Step 2 and Step 3 until the threshold stops moving [default: off]
    #[arg(long)]
    iterate: bool,
    /// Confidence level of the change-point interval [default: 0.95]
    #[arg(long)]
    level: Option<f64>,
    /// Number of simulated compound-Poisson paths [default: 1000]
    #[arg(long)]
    boot: Option<usize>,
    /// Half-width of the simulated path, as a multiple of n [default: 0.5]
    #[arg(long)]
    hbar: Option<f64>,
    /// Residuals used for the jump pools: step1, step3a or step3b [default: step1]
    #[arg(long, value_parser = config::parse_pools)]
    pools: Option<PoolSource>,
    /// Simulation scale: desk (n=200, p=50, 100 reps) or paper (n=200, p=250, 1000 reps) [default: desk]
    #[arg(long, value_parser = config::parse_preset)]
    preset: Option<Preset>,
    /// Simulation design: baseline, no_change, low_signal or cauchy [default: baseline]
    #[arg(long, value_parser = config::parse_design)]
    design: Option<Design>,
    /// Simulation sample size [default: from preset]
    #[arg(long)]
    n: Option<usize>,
    /// Simulation covariate count including the constant [default: from preset]
    #[arg(long)]
    p: Option<usize>,
    /// Number of replications [default: from preset]
    #[arg(long)]
    reps: Option<usize>,
    /// Fresh draws for excess risk and prediction error [default: from preset]
    #[arg(long)]
    eval_size: Option<usize>,
    /// Run every loop on the calling thread [default: off]
    #[arg(long)]
    sequential: bool,
}

impl Opts {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident, $flag:ident) => {
                if let Some(v) = self.$flag {
                    c.$field = v;
                }
            };
        }
        set!(gamma, gamma);
        set!(seed, seed);
        set!(grid_lower, grid_lower);
        set!(grid_upper, grid_upper);
        set!(grid_mode, grid_mode);
        set!(grid_points, grid_points);
        set!(c1, c1);
        set!(eps_star, eps_star);
        set!(sims, sims);
        set!(scad_a, scad_a);
        set!(level, level);
        set!(boot, boot);
        set!(h_bar, hbar);
        set!(pools, pools);
        set!(preset, preset);
        set!(design, design);
        if self.c2.is_some() {
            c.c2 = self.c2;
        }
        for (slot, flag) in [(&mut c.kappa, self.kappa), (&mut c.omega, self.omega), (&mut c.mu, self.mu)] {
            if flag.is_some() {
                *slot = flag;
            }
        }
        for (slot, flag) in [(&mut c.n, self.n), (&mut c.p, self.p), (&mut c.reps, self.reps), (&mut c.eval_size, self.eval_size)] {
            if flag.is_some() {
                *slot = flag;
            }
        }
        c.iterate |= self.iterate;
        c.sequential |= self.sequential;
        Ok(c)
    }
}

fn execution(c: &RunConfig) -> Execution {
    if c.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn tuning_config(c: &RunConfig) -> TuningConfig {
    TuningConfig {
        c1: c.c1,
        c2: c.c2,
        eps_star: c.eps_star,
        n_sims: c.sims,
        seed: c.seed,
        execution: execution(c),
        ..TuningConfig::default()
    }
}

fn ci_config(c: &RunConfig) -> CIConfig {
    CIConfig {
        level: c.level,
        draws: c.boot,
        h_bar: c.h_bar,
        seed: c.seed,
        pools: c.pools,
        execution: execution(c),
        ..CIConfig::default()
    }
}

fn build_grid(data: &Dataset, c: &RunConfig) -> Result<ThresholdGrid, CliError> {
    let grid = match c.grid_mode {
        GridMode::Obs => ThresholdGrid::observed(data.q(), c.grid_lower, c.grid_upper)?,
        GridMode::Equispaced => {
            for (name, v) in [("grid-lower", c.grid_lower), ("grid-upper", c.grid_upper)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(CliError::usage(format!("--{name} must lie in [0, 1], got {v}")));
                }
            }
            let lo = cpqr::stats::quantile(data.q(), c.grid_lower);
            let hi = cpqr::stats::quantile(data.q(), c.grid_upper);
            ThresholdGrid::equispaced(data.q(), lo, hi, c.grid_points)?
        }
    };
    Ok(grid)
}

fn fit_config(grid: ThresholdGrid, c: &RunConfig) -> FitConfig {
    let plan = PenaltyPlan { kappa: c.kappa, omega: c.omega, mu: c.mu, tuning: tuning_config(c) };
    let mut cfg = FitConfig::new(grid, plan);
    cfg.scad_a = c.scad_a;
    cfg.iterate = c.iterate;
    cfg.max_outer_iter = c.max_outer_iter;
    cfg.execution = execution(c);
    cfg
}

fn echo_config(r: &mut Report, c: &RunConfig) {
    r.num("gamma", c.gamma);
    r.kv("seed", c.seed);
    r.num("grid.lower", c.grid_lower);
    r.num("grid.upper", c.grid_upper);
    r.kv("grid.mode", config::grid_mode_name(c.grid_mode));
    r.kv("grid.points", c.grid_points);
    r.num("tuning.c1", c.c1);
    r.opt("tuning.c2", c.c2);
    r.num("tuning.eps_star", c.eps_star);
    r.kv("tuning.sims", c.sims);
    r.opt("penalty.kappa", c.kappa);
    r.opt("penalty.omega", c.omega);
    r.opt("penalty.mu", c.mu);
    r.num("fit.scad_a", c.scad_a);
    r.kv("fit.iterate", c.iterate);
    r.kv("fit.max_outer_iter", c.max_outer_iter);
    r.num("ci.level", c.level);
    r.kv("ci.draws", c.boot);
    r.num("ci.h_bar", c.h_bar);
    r.kv("ci.pools", config::pools_name(c.pools));
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::Degenerate => "degenerate",
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fit_sections(r: &mut Report, f: &FitResult, covariates: &[String]) {
    let p = covariates.len();
    let s1 = &f.step1.model.coef;
    let mut body = String::from("name,part,index,step1,step3a,step3b,scad_weight\n");
    for j in 0..2 * p {
        let part = if j < p { "beta" } else { "delta" };
        body.push_str(&format!(
            "{},{part},{j},{},{},{},{}\n",
            covariates[j % p],
            fmt_f64(s1.alpha(j)),
            fmt_f64(f.step3a_coef().alpha(j)),
            fmt_f64(f.step3b_coef().alpha(j)),
            fmt_f64(f.scad_weights[j])
        ));
    }
    r.table("coefficients", &body);

    let mut body = String::from("step,size,indices\n");
    for (name, coef) in [("step1", s1), ("step3a", f.step3a_coef()), ("step3b", f.step3b_coef())] {
        let set = coef.active_set();
        body.push_str(&format!("{name},{},{}\n", set.len(), indices(&set)));
    }
    r.table("active_sets", &body);

    let mut body = String::from("step,status,iterations,objective,kkt_residual\n");
    let reports: [(&str, &SolveReport); 3] = [("step1", &f.step1.report), ("step3a", &f.step3a), ("step3b", &f.step3b)];
    for (name, rep) in reports {
        body.push_str(&format!(
            "{name},{},{},{},{}\n",
            status_name(rep.status),
            rep.iterations,
            fmt_f64(rep.objective),
            fmt_f64(rep.kkt_residual)
        ));
    }
    r.table("solver", &body);
}

fn grid_trace(r: &mut Report, grid: &ThresholdGrid, f: &FitResult) {
    let mut body = String::from("tau,objective,kkt_residual\n");
    for (k, &t) in grid.points().iter().enumerate() {
        body.push_str(&format!("{},{},{}\n", fmt_f64(t), opt_num(f.step1.trace[k]), opt_num(f.step1.kkt[k])));
    }
    r.table("grid_trace", &body);
}

fn fit_summary(r: &mut Report, f: &FitResult) {
    r.num("kappa", f.kappa);
    r.num("omega", f.omega);
    r.num("mu", f.mu);
    r.num("tau_step1", f.step1.model.tau);
    r.num("tau_step2", f.step2_tau);
    r.kv("skipped_step2", f.skipped_step2);
    r.num("tau_step3", f.step3_tau);
    r.opt("tau_from_step3a", f.tau_from_3a);
    r.opt("tau_from_step3b", f.tau_from_3b);
    r.opt("tau_hat", f.final_tau);
    r.kv("no_change", f.no_change);
    r.kv("outer_iterations", f.outer_iterations);
    r.kv("outer_converged", f.outer_converged);
}

/// Adds the interval, or a warning when it is undefined. Solver-level
/// failures are propagated.
fn ci_section(r: &mut Report, data: &Dataset, f: &FitResult, c: &RunConfig, warnings: &mut Vec<String>) -> Result<(), CliError> {
    if f.no_change {
        warnings.push("confidence interval omitted: no change point".into());
        r.kv("ci", "omitted");
        return Ok(());
    }
    match confidence_interval(data, f, &ci_config(c)) {
        Ok(ci) => {
            r.num("ci_lo", ci.lo);
            r.num("ci_hi", ci.hi);
            r.num("ci_level", ci.level);
            r.num("ci_rate", ci.rate);
            r.num("ci_bandwidth", ci.bandwidth);
            r.kv("ci_saturated_draws", ci.saturated);
            Ok(())
        }
        Err(e @ (cpqr::Error::Degenerate(_) | cpqr::Error::NoChangePoint(_))) => {
            warnings.push(format!("confidence interval omitted: {e}"));
            r.kv("ci", "omitted");
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_fit(csv: &Path, opts: &Opts, ci_only: bool) -> Result<String, CliError> {
    let c = opts.resolve()?;
    let loaded = data::load_csv(csv, c.gamma)?;
    let data = &loaded.data;
    let grid = build_grid(data, &c)?;
    let f = fit(data, &fit_config(grid.clone(), &c))?;
    let mut warnings = f.warnings.clone();

    let mut r = Report::new(if ci_only { "cpqr ci report" } else { "cpqr fit report" });
    r.kv("n", data.n());
    r.kv("p", data.p());
    r.kv("covariates", loaded.covariates.join(";"));
    r.kv("grid_size", grid.len());
    echo_config(&mut r, &c);
    if ci_only {
        r.opt("tau_hat", f.final_tau);
        r.kv("no_change", f.no_change);
    } else {
        fit_summary(&mut r, &f);
    }
    ci_section(&mut r, data, &f, &c, &mut warnings)?;
    for w in &warnings {
        r.kv("warning", w);
    }
    if !ci_only {
        fit_sections(&mut r, &f, &loaded.covariates);
        grid_trace(&mut r, &grid, &f);
    }
    Ok(r.into_string())
}

fn cmd_tune(csv: &Path, tau: Option<f64>, opts: &Opts) -> Result<String, CliError> {
    let c = opts.resolve()?;
    let loaded = data::load_csv(csv, c.gamma)?;
    let data = &loaded.data;
    let grid = build_grid(data, &c)?;
    let cfg = tuning_config(&c);
    cfg.validate()?;
    let mut r = Report::new("cpqr tune report");
    r.kv("n", data.n());
    r.kv("p", data.p());
    r.kv("grid_size", grid.len());
    echo_config(&mut r, &c);
    r.num("kappa", select_kappa(data, grid.points(), &cfg)?);
    if let Some(t) = tau {
        let omega = select_omega(data, t, &cfg)?;
        r.num("tau", t);
        r.num("omega", omega);
        r.num("mu", select_mu(omega, data.n(), c.c2)?);
    }
    Ok(r.into_string())
}

fn cmd_simulate(opts: &Opts) -> Result<String, CliError> {
    let c = opts.resolve()?;
    let (pn, pp, preps, peval) = c.preset.scale();
    let (n, p) = (c.n.unwrap_or(pn), c.p.unwrap_or(pp));
    if p < 2 {
        return Err(CliError::usage(format!("simulation needs p >= 2 (a constant and at least one regressor), got {p}")));
    }
    let design = match c.design {
        Design::Baseline => DgpSpec::baseline(n, p, c.gamma),
        Design::NoChange => DgpSpec::no_change(n, p, c.gamma),
        Design::LowSignal => {
            if c.gamma != 0.5 {
                return Err(CliError::usage("the low_signal design is defined for gamma = 0.5 only"));
            }
            DgpSpec::low_signal(n, p)
        }
        Design::Cauchy => DgpSpec::cauchy(n, p, c.gamma, c.cauchy_scale),
    };
    let mut cfg = ExperimentConfig::new(design, c.reps.unwrap_or(preps), c.eval_size.unwrap_or(peval));
    cfg.seed = c.seed;
    cfg.grid_lower = c.grid_lower;
    cfg.grid_upper = c.grid_upper;
    cfg.plan = PenaltyPlan { kappa: c.kappa, omega: c.omega, mu: c.mu, tuning: tuning_config(&c) };
    cfg.scad_a = c.scad_a;
    cfg.iterate = c.iterate;
    cfg.ci = ci_config(&c);
    cfg.step3_pools = c.step3_pools;
    cfg.execution = execution(&c);
    if c.grid_mode != GridMode::Obs {
        return Err(CliError::usage("simulate supports only --grid-mode obs"));
    }
    let s = run_experiment(&cfg)?;

    let mut r = Report::new("cpqr simulate report");
    r.kv("preset", config::preset_name(c.preset));
    r.kv("design", config::design_name(c.design));
    r.kv("n", n);
    r.kv("p", p);
    r.kv("reps", cfg.reps);
    r.kv("eval_size", cfg.eval_size);
    r.num("tau0", cfg.design.tau0);
    if c.design == Design::Cauchy {
        r.num("cauchy_scale", c.cauchy_scale);
    }
    r.kv("step3_pools", c.step3_pools);
    echo_config(&mut r, &c);
    r.kv("failed_reps", s.failures.len());
    for (rep, msg) in &s.failures {
        r.kv("failure", format!("{rep}: {msg}"));
    }
    r.table("summary", &s.summary_csv());
    r.table("replications", &s.replications_csv());
    Ok(r.into_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out) = match &cli.command {
        Command::Fit { csv, opts } => (cmd_fit(csv, opts, false), opts.out.as_deref()),
        Command::Ci { csv, opts } => (cmd_fit(csv, opts, true), opts.out.as_deref()),
        Command::Tune { csv, tau, opts } => (cmd_tune(csv, *tau, opts), opts.out.as_deref()),
        Command::Simulate { opts } => (cmd_simulate(opts), opts.out.as_deref()),
    };
    match result.and_then(|text| write_output(out, &text)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
