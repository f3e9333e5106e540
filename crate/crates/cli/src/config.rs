//! Run configuration: defaults, TOML files with flat dotted keys, and flag overrides.

use std::path::Path;

use cpqr::harness::Preset;
use cpqr::inference::PoolSource;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    /// Observed threshold values between two empirical quantiles.
    Obs,
    /// Equally spaced points between two empirical quantiles.
    Equispaced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    Baseline,
    NoChange,
    LowSignal,
    Cauchy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gamma: f64,
    pub seed: u64,
    pub grid_lower: f64,
    pub grid_upper: f64,
    pub grid_mode: GridMode,
    pub grid_points: usize,
    pub c1: f64,
    pub c2: Option<f64>,
    pub eps_star: f64,
    pub sims: usize,
    pub kappa: Option<f64>,
    pub omega: Option<f64>,
    pub mu: Option<f64>,
    pub scad_a: f64,
    pub iterate: bool,
    pub max_outer_iter: usize,
    pub level: f64,
    pub boot: usize,
    pub h_bar: f64,
    pub pools: PoolSource,
    pub preset: Preset,
    pub design: Design,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub reps: Option<usize>,
    pub eval_size: Option<usize>,
    pub cauchy_scale: f64,
    pub step3_pools: bool,
    pub sequential: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            seed: 0,
            grid_lower: 0.15,
            grid_upper: 0.85,
            grid_mode: GridMode::Obs,
            grid_points: 50,
            c1: cpqr::tuning::DEFAULT_C1,
            c2: None,
            eps_star: cpqr::tuning::DEFAULT_EPS_STAR,
            sims: cpqr::tuning::DEFAULT_SIMS,
            kappa: None,
            omega: None,
            mu: None,
            scad_a: cpqr::estimator::DEFAULT_SCAD_A,
            iterate: false,
            max_outer_iter: cpqr::estimator::DEFAULT_MAX_OUTER_ITER,
            level: cpqr::inference::DEFAULT_LEVEL,
            boot: cpqr::inference::DEFAULT_DRAWS,
            h_bar: cpqr::inference::DEFAULT_H_BAR,
            pools: PoolSource::Step1,
            preset: Preset::Desk,
            design: Design::Baseline,
            n: None,
            p: None,
            reps: None,
            eval_size: None,
            cauchy_scale: 0.25,
            step3_pools: false,
            sequential: false,
        }
    }
}

/// Every key accepted in a configuration file.
pub const KEYS: &[&str] = &[
    "gamma",
    "seed",
    "grid.lower",
    "grid.upper",
    "grid.mode",
    "grid.points",
    "tuning.c1",
    "tuning.c2",
    "tuning.eps_star",
    "tuning.sims",
    "penalty.kappa",
    "penalty.omega",
    "penalty.mu",
    "fit.scad_a",
    "fit.iterate",
    "fit.max_outer_iter",
    "ci.level",
    "ci.draws",
    "ci.h_bar",
    "ci.pools",
    "sim.preset",
    "sim.design",
    "sim.n",
    "sim.p",
    "sim.reps",
    "sim.eval_size",
    "sim.cauchy_scale",
    "sim.step3_pools",
    "exec.sequential",
];

pub fn parse_grid_mode(s: &str) -> Result<GridMode, String> {
    match s {
        "obs" => Ok(GridMode::Obs),
        "equispaced" => Ok(GridMode::Equispaced),
        other => Err(format!("unknown grid mode '{other}' (expected obs or equispaced)")),
    }
}

pub fn parse_design(s: &str) -> Result<Design, String> {
    match s {
        "baseline" => Ok(Design::Baseline),
        "no_change" => Ok(Design::NoChange),
        "low_signal" => Ok(Design::LowSignal),
        "cauchy" => Ok(Design::Cauchy),
        other => Err(format!("unknown design '{other}' (expected baseline, no_change, low_signal or cauchy)")),
    }
}

pub fn parse_pools(s: &str) -> Result<PoolSource, String> {
    match s {
        "step1" => Ok(PoolSource::Step1),
        "step3a" => Ok(PoolSource::Step3a),
        "step3b" => Ok(PoolSource::Step3b),
        other => Err(format!("unknown pool source '{other}' (expected step1, step3a or step3b)")),
    }
}

pub fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse::<Preset>().map_err(|e| e.to_string())
}

pub fn grid_mode_name(m: GridMode) -> &'static str {
    match m {
        GridMode::Obs => "obs",
        GridMode::Equispaced => "equispaced",
    }
}

pub fn design_name(d: Design) -> &'static str {
    match d {
        Design::Baseline => "baseline",
        Design::NoChange => "no_change",
        Design::LowSignal => "low_signal",
        Design::Cauchy => "cauchy",
    }
}

pub fn pools_name(p: PoolSource) -> &'static str {
    match p {
        PoolSource::Step1 => "step1",
        PoolSource::Step3a => "step3a",
        PoolSource::Step3b => "step3b",
    }
}

pub fn preset_name(p: Preset) -> &'static str {
    match p {
        Preset::Desk => "desk",
        Preset::Paper => "paper",
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64, CliError> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(CliError::usage(format!("config key '{key}' must be a number"))),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize, CliError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(CliError::usage(format!("config key '{key}' must be a non-negative integer"))),
    }
}

fn as_bool(key: &str, v: &toml::Value) -> Result<bool, CliError> {
    v.as_bool().ok_or_else(|| CliError::usage(format!("config key '{key}' must be true or false")))
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str, CliError> {
    v.as_str().ok_or_else(|| CliError::usage(format!("config key '{key}' must be a string")))
}

fn named<T>(key: &str, r: Result<T, String>) -> Result<T, CliError> {
    r.map_err(|e| CliError::usage(format!("config key '{key}': {e}")))
}

impl RunConfig {
    /// Applies the keys of a TOML document on top of `self`.
    pub fn apply_toml(&mut self, text: &str) -> Result<(), CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::usage(format!("invalid config file: {e}")))?;
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        for (key, v) in &entries {
            let k = key.as_str();
            match k {
                "gamma" => self.gamma = as_f64(k, v)?,
                "seed" => {
                    self.seed = match v {
                        toml::Value::Integer(i) if *i >= 0 => *i as u64,
                        _ => return Err(CliError::usage("config key 'seed' must be a non-negative integer")),
                    }
                }
                "grid.lower" => self.grid_lower = as_f64(k, v)?,
                "grid.upper" => self.grid_upper = as_f64(k, v)?,
                "grid.mode" => self.grid_mode = named(k, parse_grid_mode(as_str(k, v)?))?,
                "grid.points" => self.grid_points = as_usize(k, v)?,
                "tuning.c1" => self.c1 = as_f64(k, v)?,
                "tuning.c2" => self.c2 = Some(as_f64(k, v)?),
                "tuning.eps_star" => self.eps_star = as_f64(k, v)?,
                "tuning.sims" => self.sims = as_usize(k, v)?,
                "penalty.kappa" => self.kappa = Some(as_f64(k, v)?),
                "penalty.omega" => self.omega = Some(as_f64(k, v)?),
                "penalty.mu" => self.mu = Some(as_f64(k, v)?),
                "fit.scad_a" => self.scad_a = as_f64(k, v)?,
                "fit.iterate" => self.iterate = as_bool(k, v)?,
                "fit.max_outer_iter" => self.max_outer_iter = as_usize(k, v)?,
                "ci.level" => self.level = as_f64(k, v)?,
                "ci.draws" => self.boot = as_usize(k, v)?,
                "ci.h_bar" => self.h_bar = as_f64(k, v)?,
                "ci.pools" => self.pools = named(k, parse_pools(as_str(k, v)?))?,
                "sim.preset" => self.preset = named(k, parse_preset(as_str(k, v)?))?,
                "sim.design" => self.design = named(k, parse_design(as_str(k, v)?))?,
                "sim.n" => self.n = Some(as_usize(k, v)?),
                "sim.p" => self.p = Some(as_usize(k, v)?),
                "sim.reps" => self.reps = Some(as_usize(k, v)?),
                "sim.eval_size" => self.eval_size = Some(as_usize(k, v)?),
                "sim.cauchy_scale" => self.cauchy_scale = as_f64(k, v)?,
                "sim.step3_pools" => self.step3_pools = as_bool(k, v)?,
                "exec.sequential" => self.sequential = as_bool(k, v)?,
                _ => {
                    return Err(CliError::usage(format!(
                        "unknown config key '{key}'; accepted keys: {}",
                        KEYS.join(", ")
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config file {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_toml(&text)?;
        Ok(cfg)
    }
}
