//! Out-of-sample and parameter-error metrics for a fitted model.

use rand::Rng;

use super::dgp::{DgpSpec, Sample};
use crate::model::{check_loss, dot, CoefVector, ThresholdedModel};

/// Fitted values `X(tau)'alpha` on a sample.
fn fitted(sample: &Sample, p: usize, model: &ThresholdedModel) -> Vec<f64> {
    sample
        .q
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let row = &sample.x[i * p..(i + 1) * p];
            let mut v = dot(row, &model.coef.beta);
            if q > model.tau {
                v += dot(row, &model.coef.delta);
            }
            v
        })
        .collect()
}

/// Average check-loss difference between `model` and `truth` on `sample`.
pub fn excess_risk(sample: &Sample, p: usize, gamma: f64, model: &ThresholdedModel, truth: &ThresholdedModel) -> f64 {
    let f = fitted(sample, p, model);
    let t = fitted(sample, p, truth);
    let total: f64 = (0..sample.y.len())
        .map(|i| check_loss(sample.y[i] - f[i], gamma) - check_loss(sample.y[i] - t[i], gamma))
        .sum();
    total / sample.y.len() as f64
}

/// Root mean squared difference of fitted values on `sample`.
pub fn prediction_error(sample: &Sample, p: usize, model: &ThresholdedModel, truth: &ThresholdedModel) -> f64 {
    let f = fitted(sample, p, model);
    let t = fitted(sample, p, truth);
    let ss: f64 = f.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / f.len() as f64).sqrt()
}

/// Excess risk on a fresh sample of size `s`.
pub fn excess_risk_mc<R: Rng + ?Sized>(
    model: &ThresholdedModel,
    truth: &ThresholdedModel,
    spec: &DgpSpec,
    s: usize,
    rng: &mut R,
) -> f64 {
    excess_risk(&spec.sample(s, rng), spec.p, spec.gamma, model, truth)
}

/// Prediction error on a fresh sample of size `s`.
pub fn prediction_error_mc<R: Rng + ?Sized>(
    model: &ThresholdedModel,
    truth: &ThresholdedModel,
    spec: &DgpSpec,
    s: usize,
    rng: &mut R,
) -> f64 {
    prediction_error(&spec.sample(s, rng), spec.p, model, truth)
}

/// Sum of squared coefficient errors, split over the true active set and its
/// complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseSplit {
    pub total: f64,
    pub active: f64,
    pub inactive: f64,
}

pub fn mse_split(est: &CoefVector, truth: &CoefVector) -> MseSplit {
    let mut active = 0.0;
    let mut inactive = 0.0;
    for j in 0..truth.len() {
        let e = est.alpha(j) - truth.alpha(j);
        if truth.alpha(j) != 0.0 {
            active += e * e;
        } else {
            inactive += e * e;
        }
    }
    MseSplit { total: active + inactive, active, inactive }
}
