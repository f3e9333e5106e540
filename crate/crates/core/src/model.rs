//! Domain types for the thresholded quantile regression model
//!
//! The model is `y = x'beta + x'delta 1{q > tau} + u`. Coefficients are carried as
//! the stacked vector `alpha = (beta, delta)` of length `2p`, and `X(tau)` denotes
//! the augmented row `(x, x 1{q > tau})`.

use crate::error::{Error, Result};
use crate::stats;

/// Observed sample: response, covariates (row-major), threshold variable and
/// the quantile level being fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: Vec<f64>,
    q: Vec<f64>,
    n: usize,
    p: usize,
    gamma: f64,
}

impl Dataset {
    /// Builds a dataset from a row-major `n x p` covariate buffer.
    pub fn new(y: Vec<f64>, x: Vec<f64>, p: usize, q: Vec<f64>, gamma: f64) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 observations, got {n}")));
        }
        if p == 0 {
            return Err(Error::invalid("need at least one covariate column"));
        }
        if x.len() != n * p {
            return Err(Error::DimensionMismatch { expected: n * p, got: x.len() });
        }
        if q.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: q.len() });
        }
        check_gamma(gamma)?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("y[{i}] is not finite")));
        }
        if let Some(i) = q.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("q[{i}] is not finite")));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("x[{}, {}] is not finite", k / p, k % p)));
        }
        Ok(Self { y, x, q, n, p, gamma })
    }

    /// Builds a dataset from covariate rows.
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>], q: Vec<f64>, gamma: f64) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::invalid(format!("covariate row {i} has inconsistent length")));
        }
        if rows.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), got: rows.len() });
        }
        let x = rows.iter().flatten().copied().collect();
        Self::new(y, x, p, q, gamma)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Row-major covariate buffer.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Same observations at a different quantile level.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { gamma, ..self.clone() })
    }

    /// Reorders observations; `order[k]` is the source row of new row `k`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: order.len() });
        }
        let y = order.iter().map(|&i| self.y[i]).collect();
        let q = order.iter().map(|&i| self.q[i]).collect();
        let x = order.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self::new(y, x, self.p, q, self.gamma)
    }

    /// `x_i'beta` and `x_i'delta` for every row.
    pub fn projections(&self, coef: &CoefVector) -> (Vec<f64>, Vec<f64>) {
        let xb = (0..self.n).map(|i| dot(self.row(i), &coef.beta)).collect();
        let xd = (0..self.n).map(|i| dot(self.row(i), &coef.delta)).collect();
        (xb, xd)
    }

    /// Residuals `y_i - X_i(tau)'alpha`.
    pub fn residuals(&self, coef: &CoefVector, tau: f64) -> Result<Vec<f64>> {
        self.check_coef(coef)?;
        let (xb, xd) = self.projections(coef);
        Ok((0..self.n)
            .map(|i| {
                let shift = if self.q[i] > tau { xd[i] } else { 0.0 };
                self.y[i] - xb[i] - shift
            })
            .collect())
    }

    pub(crate) fn check_coef(&self, coef: &CoefVector) -> Result<()> {
        if coef.p() != self.p {
            return Err(Error::DimensionMismatch { expected: 2 * self.p, got: coef.len() });
        }
        Ok(())
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("quantile level must lie in (0, 1), got {gamma}")))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stacked coefficient vector `alpha = (beta, delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVector {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
}

impl CoefVector {
    pub fn zeros(p: usize) -> Self {
        Self { beta: vec![0.0; p], delta: vec![0.0; p] }
    }

    pub fn new(beta: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        if beta.len() != delta.len() {
            return Err(Error::DimensionMismatch { expected: beta.len(), got: delta.len() });
        }
        Ok(Self { beta, delta })
    }

    /// Splits a length-`2p` vector into `(beta, delta)`.
    pub fn from_alpha(alpha: &[f64]) -> Result<Self> {
        if alpha.len() % 2 != 0 {
            return Err(Error::invalid(format!("alpha must have even length, got {}", alpha.len())));
        }
        let p = alpha.len() / 2;
        Ok(Self { beta: alpha[..p].to_vec(), delta: alpha[p..].to_vec() })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn len(&self) -> usize {
        2 * self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Zero-based accessor over the stacked vector.
    pub fn alpha(&self, j: usize) -> f64 {
        let p = self.p();
        if j < p {
            self.beta[j]
        } else {
            self.delta[j - p]
        }
    }

    pub fn to_alpha(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.delta).copied().collect()
    }

    /// Indices (zero-based, over `alpha`) of entries that are not exactly zero.
    pub fn active_set(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.alpha(j) != 0.0).collect()
    }

    pub fn delta_is_zero(&self) -> bool {
        self.delta.iter().all(|&d| d == 0.0)
    }
}

/// A coefficient vector paired with its change point.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedModel {
    pub coef: CoefVector,
    pub tau: f64,
}

/// Check loss `u (gamma - 1{u <= 0})`.
pub fn check_loss(u: f64, gamma: f64) -> f64 {
    if u <= 0.0 {
        u * (gamma - 1.0)
    } else {
        u * gamma
    }
}

/// Augmented row `X_i(tau) = (x_i, x_i 1{q_i > tau})`.
pub fn augmented_row(x_i: &[f64], q_i: f64, tau: f64) -> Vec<f64> {
    let on = q_i > tau;
    x_i.iter()
        .copied()
        .chain(x_i.iter().map(|&v| if on { v } else { 0.0 }))
        .collect()
}

/// Root-mean-square column norms `D_j(tau)` of the augmented design.
pub fn column_weights(data: &Dataset, tau: f64) -> Vec<f64> {
    let p = data.p();
    let mut ss = vec![0.0; 2 * p];
    for i in 0..data.n() {
        let on = data.q[i] > tau;
        for (j, &v) in data.row(i).iter().enumerate() {
            let sq = v * v;
            ss[j] += sq;
            if on {
                ss[p + j] += sq;
            }
        }
    }
    let n = data.n() as f64;
    ss.into_iter().map(|s| (s / n).sqrt()).collect()
}

/// `R_n(alpha, tau)`: average check loss of the model on the sample.
pub fn empirical_risk(data: &Dataset, model: &ThresholdedModel) -> Result<f64> {
    let r = data.residuals(&model.coef, model.tau)?;
    Ok(r.iter().map(|&u| check_loss(u, data.gamma)).sum::<f64>() / data.n() as f64)
}

/// Empirical risk of a fixed coefficient vector at every tau in `taus`.
///
/// Projections are computed once, so this is `O(np + n * taus.len())`.
pub fn risk_profile(data: &Dataset, coef: &CoefVector, taus: &[f64]) -> Result<Vec<f64>> {
    data.check_coef(coef)?;
    let (xb, xd) = data.projections(coef);
    let n = data.n() as f64;
    Ok(taus
        .iter()
        .map(|&tau| {
            let total: f64 = (0..data.n())
                .map(|i| {
                    let shift = if data.q[i] > tau { xd[i] } else { 0.0 };
                    check_loss(data.y[i] - xb[i] - shift, data.gamma)
                })
                .sum();
            total / n
        })
        .collect())
}

/// How a grid of candidate thresholds was constructed.
#[derive(Debug, Clone, PartialEq)]
pub enum GridProvenance {
    /// Distinct observed `q` values between two empirical quantile levels.
    Observed { lower_level: f64, upper_level: f64 },
    /// Equally spaced points over `[lower, upper]`.
    EquiSpaced { lower: f64, upper: f64, count: usize },
    /// Caller-supplied points.
    Explicit,
}

/// Strictly increasing candidate values for the change point.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    points: Vec<f64>,
    provenance: GridProvenance,
}

impl ThresholdGrid {
    /// Distinct sorted `q` values lying between the empirical `lower_level` and
    /// `upper_level` quantiles (inclusive).
    pub fn observed(q: &[f64], lower_level: f64, upper_level: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lower_level)
            || !(0.0..=1.0).contains(&upper_level)
            || lower_level > upper_level
        {
            return Err(Error::invalid(format!(
                "grid quantile band [{lower_level}, {upper_level}] is not a sub-interval of [0, 1]"
            )));
        }
        let sorted = stats::sorted_copy(q);
        if sorted.is_empty() {
            return Err(Error::invalid("empty threshold variable"));
        }
        let lo = stats::quantile_sorted(&sorted, lower_level);
        let hi = stats::quantile_sorted(&sorted, upper_level);
        let mut points: Vec<f64> = sorted.into_iter().filter(|&v| v >= lo && v <= hi).collect();
        points.dedup();
        if points.is_empty() {
            return Err(Error::invalid("no observed threshold values inside the quantile band"));
        }
        Ok(Self { points, provenance: GridProvenance::Observed { lower_level, upper_level } })
    }

    /// `count` equally spaced points over `[lower, upper]`, which must lie inside
    /// the observed range of `q`.
    pub fn equispaced(q: &[f64], lower: f64, upper: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("equi-spaced grid needs at least one point"));
        }
        if !(lower <= upper) || (count > 1 && lower == upper) {
            return Err(Error::invalid(format!("invalid grid interval [{lower}, {upper}]")));
        }
        let points: Vec<f64> = if count == 1 {
            vec![lower]
        } else {
            let step = (upper - lower) / (count - 1) as f64;
            (0..count)
                .map(|k| if k + 1 == count { upper } else { lower + step * k as f64 })
                .collect()
        };
        let grid = Self {
            points,
            provenance: GridProvenance::EquiSpaced { lower, upper, count },
        };
        grid.check_range(q)?;
        Ok(grid)
    }

    pub fn from_points(points: Vec<f64>, q: &[f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("threshold grid is empty"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("threshold grid must be strictly increasing"));
        }
        let grid = Self { points, provenance: GridProvenance::Explicit };
        grid.check_range(q)?;
        Ok(grid)
    }

    fn check_range(&self, q: &[f64]) -> Result<()> {
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.points.iter().any(|&t| !t.is_finite() || t < lo || t > hi) {
            return Err(Error::invalid(format!(
                "threshold grid must lie within the observed range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn provenance(&self) -> &GridProvenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, tau: f64) -> bool {
        self.points.binary_search_by(|p| p.total_cmp(&tau)).is_ok()
    }

    /// Index of the first minimum of `values` (ties resolve to the smallest tau).
    pub(crate) fn first_argmin(values: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &v) in values.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            match best {
                Some((_, b)) if v >= b => {}
                _ => best = Some((k, v)),
            }
        }
        best.map(|(k, _)| k)
    }
}
