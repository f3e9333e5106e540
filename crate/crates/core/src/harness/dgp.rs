//! Data-generating processes for the simulation designs:
//!
//! ```text
//!     Y = X'(beta0 + xi10 U) + 1{Q > tau0} X'(delta0 + xi20 U)
//! ```
//!
//! with `X = (1, Z)`, `Z` Gaussian with AR(1) correlation `rho^|i-j|`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{CoefVector, Dataset, ThresholdedModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QDist {
    Uniform01,
    StandardNormal,
    ChiSquared1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorDist {
    Normal { sd: f64 },
    Cauchy { scale: f64 },
}

impl ErrorDist {
    pub fn quantile(self, level: f64) -> f64 {
        match self {
            ErrorDist::Normal { sd } => sd * Normal::standard().inverse_cdf(level),
            ErrorDist::Cauchy { scale } => scale * (std::f64::consts::PI * (level - 0.5)).tan(),
        }
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorDist::Normal { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            ErrorDist::Cauchy { scale } => scale * (std::f64::consts::PI * (rng.random::<f64>() - 0.5)).tan(),
        }
    }
}

impl QDist {
    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            QDist::Uniform01 => rng.random(),
            QDist::StandardNormal => StandardNormal.sample(rng),
            QDist::ChiSquared1 => {
                let z: f64 = StandardNormal.sample(rng);
                z * z
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub n: usize,
    pub p: usize,
    pub tau0: f64,
    pub beta0: Vec<f64>,
    pub delta0: Vec<f64>,
    pub xi10: Vec<f64>,
    pub xi20: Vec<f64>,
    pub q_dist: QDist,
    pub error_dist: ErrorDist,
    pub corr_rho: f64,
    pub gamma: f64,
}

/// Draws from the design without a response model attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub y: Vec<f64>,
    /// Row-major `len x p`.
    pub x: Vec<f64>,
    pub q: Vec<f64>,
}

fn unit(p: usize, j: usize, v: f64) -> Vec<f64> {
    let mut e = vec![0.0; p];
    e[j] = v;
    e
}

impl DgpSpec {
    /// Heteroskedastic baseline: `beta0 = (0, Quant_0.75(U), 0, ...)`,
    /// `delta0 = xi10 = (0, 1, 0, ...)`, `xi20 = 0`, `U ~ N(0, 0.5^2)`,
    /// `Q ~ U(0, 1)`, `tau0 = 0.5`.
    pub fn baseline(n: usize, p: usize, gamma: f64) -> Self {
        let error_dist = ErrorDist::Normal { sd: 0.5 };
        Self {
            n,
            p,
            tau0: 0.5,
            beta0: unit(p, 1, error_dist.quantile(0.75)),
            delta0: unit(p, 1, 1.0),
            xi10: unit(p, 1, 1.0),
            xi20: vec![0.0; p],
            q_dist: QDist::Uniform01,
            error_dist,
            corr_rho: 0.5,
            gamma,
        }
    }

    /// Baseline without a change point (`delta0 = 0`).
    pub fn no_change(n: usize, p: usize, gamma: f64) -> Self {
        Self { delta0: vec![0.0; p], ..Self::baseline(n, p, gamma) }
    }

    /// Median baseline with decaying shift `delta0 = (0, 1, 1/2, 1/4, 1/8, 1/16, 0, ...)`.
    pub fn low_signal(n: usize, p: usize) -> Self {
        let mut delta0 = vec![0.0; p];
        for (k, d) in delta0.iter_mut().enumerate().skip(1).take(5) {
            *d = 0.5f64.powi(k as i32 - 1);
        }
        Self { delta0, ..Self::baseline(n, p, 0.5) }
    }

    /// Baseline with Cauchy errors of the given scale.
    pub fn cauchy(n: usize, p: usize, gamma: f64, scale: f64) -> Self {
        let error_dist = ErrorDist::Cauchy { scale };
        Self { error_dist, beta0: unit(p, 1, error_dist.quantile(0.75)), ..Self::baseline(n, p, gamma) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 1 {
            return Err(Error::invalid(format!("need n >= 2 and p >= 1, got n = {}, p = {}", self.n, self.p)));
        }
        for (name, v) in [("beta0", &self.beta0), ("delta0", &self.delta0), ("xi10", &self.xi10), ("xi20", &self.xi20)] {
            if v.len() != self.p {
                return Err(Error::invalid(format!("{name} has length {}, expected p = {}", v.len(), self.p)));
            }
        }
        if !(self.corr_rho.abs() < 1.0) {
            return Err(Error::invalid(format!("corr_rho must satisfy |rho| < 1, got {}", self.corr_rho)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        let bad_scale = match self.error_dist {
            ErrorDist::Normal { sd } => !(sd >= 0.0 && sd.is_finite()),
            ErrorDist::Cauchy { scale } => !(scale >= 0.0 && scale.is_finite()),
        };
        if bad_scale {
            return Err(Error::invalid("error scale must be finite and >= 0"));
        }
        Ok(())
    }

    /// `(beta_gamma, delta_gamma, tau0)`: the conditional gamma-quantile model.
    pub fn truth(&self) -> ThresholdedModel {
        let qu = self.error_dist.quantile(self.gamma);
        let beta = self.beta0.iter().zip(&self.xi10).map(|(b, x)| b + x * qu).collect();
        let delta = self.delta0.iter().zip(&self.xi20).map(|(d, x)| d + x * qu).collect();
        ThresholdedModel { coef: CoefVector { beta, delta }, tau: self.tau0 }
    }

    /// `size` i.i.d. rows from the design.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Sample {
        let p = self.p;
        let scale = (1.0 - self.corr_rho * self.corr_rho).sqrt();
        let mut x = Vec::with_capacity(size * p);
        let mut y = Vec::with_capacity(size);
        let mut q = Vec::with_capacity(size);
        let mut row = vec![0.0; p];
        for _ in 0..size {
            row[0] = 1.0;
            let mut z = 0.0;
            for (k, r) in row.iter_mut().enumerate().skip(1) {
                let e: f64 = StandardNormal.sample(rng);
                z = if k == 1 { e } else { self.corr_rho * z + scale * e };
                *r = z;
            }
            let qi = self.q_dist.sample(rng);
            let u = self.error_dist.sample(rng);
            let mut yi = 0.0;
            for j in 0..p {
                yi += row[j] * (self.beta0[j] + self.xi10[j] * u);
                if qi > self.tau0 {
                    yi += row[j] * (self.delta0[j] + self.xi20[j] * u);
                }
            }
            x.extend_from_slice(&row);
            y.push(yi);
            q.push(qi);
        }
        Sample { y, x, q }
    }

    /// A dataset of size `n` plus the true quantile model.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Dataset, ThresholdedModel)> {
        self.validate()?;
        let s = self.sample(self.n, rng);
        Ok((Dataset::new(s.y, s.x, self.p, s.q, self.gamma)?, self.truth()))
    }
}
