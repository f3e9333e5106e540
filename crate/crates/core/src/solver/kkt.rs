//! Subgradient optimality certificate for the penalized check-loss objective.
//!
//! At a minimizer there are scores `psi_i in [gamma - 1, gamma]`, pinned to
//! `gamma - 1{r_i < 0}` wherever the residual `r_i` is nonzero, such that
//! `g_j = n^-1 sum_i X_ij(tau) psi_i` equals `sign(alpha_j) lambda_j` on the
//! support and lies in `[-lambda_j, lambda_j]` off it. The residual reported is
//! the smallest achievable sup-norm violation over the free scores.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::model::{augmented_row, CoefVector, Dataset};

/// Residuals this close to zero are treated as interpolated observations.
pub(crate) fn is_zero_residual(r: f64, y: f64) -> bool {
    r.abs() <= 1e-9 * (1.0 + y.abs())
}

/// Violations below this are accepted from a supplied score vector without
/// solving the LP.
const HINT_ACCEPT: f64 = 1e-10;

fn target(alpha: f64, level: f64) -> (f64, f64) {
    if alpha > 0.0 {
        (level, level)
    } else if alpha < 0.0 {
        (-level, -level)
    } else {
        (-level, level)
    }
}

fn distance(g: f64, (lo, hi): (f64, f64)) -> f64 {
    if g < lo {
        lo - g
    } else if g > hi {
        g - hi
    } else {
        0.0
    }
}

/// `levels[j]` is the per-coordinate penalty `lambda * w_j`; an infinite level
/// encodes a coordinate constrained to zero.
pub(crate) fn residual(data: &Dataset, tau: f64, levels: &[f64], coef: &CoefVector, hint: Option<&[f64]>) -> f64 {
    let n = data.n();
    let m = coef.len();
    let gamma = data.gamma();
    let alpha = coef.to_alpha();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| augmented_row(data.row(i), data.q()[i], tau)).collect();
    let resid: Vec<f64> = rows
        .iter()
        .zip(data.y())
        .map(|(row, &y)| y - row.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| is_zero_residual(resid[i], data.y()[i])).collect();

    let inv_n = 1.0 / n as f64;
    let mut fixed = vec![0.0; m];
    for i in 0..n {
        if is_zero_residual(resid[i], data.y()[i]) {
            continue;
        }
        let psi = if resid[i] < 0.0 { gamma - 1.0 } else { gamma };
        for (f, &x) in fixed.iter_mut().zip(&rows[i]) {
            *f += x * psi * inv_n;
        }
    }
    let targets: Vec<(f64, f64)> = (0..m).map(|j| target(alpha[j], levels[j])).collect();

    let violation = |psi_free: &dyn Fn(usize) -> f64| -> f64 {
        let mut g = fixed.clone();
        for (k, &i) in free.iter().enumerate() {
            let psi = psi_free(k);
            for (gj, &x) in g.iter_mut().zip(&rows[i]) {
                *gj += x * psi * inv_n;
            }
        }
        g.iter().zip(&targets).map(|(&gj, &t)| distance(gj, t)).fold(0.0, f64::max)
    };

    let mut best = f64::INFINITY;
    if free.is_empty() {
        return violation(&|_| 0.0);
    }
    if let Some(h) = hint {
        best = violation(&|k| h[free[k]].clamp(gamma - 1.0, gamma));
        if best <= HINT_ACCEPT {
            return best;
        }
    }

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = free.iter().map(|_| lp.add_var(0.0, (gamma - 1.0, gamma))).collect();
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    for j in 0..m {
        let (lo, hi) = targets[j];
        let mut expr: Vec<_> = free
            .iter()
            .zip(&vars)
            .filter(|(&i, _)| rows[i][j] != 0.0)
            .map(|(&i, &v)| (v, rows[i][j] * inv_n))
            .collect();
        if hi.is_finite() {
            expr.push((t, -1.0));
            lp.add_constraint(expr.as_slice(), ComparisonOp::Le, hi - fixed[j]);
            expr.pop();
        }
        if lo.is_finite() {
            expr.push((t, 1.0));
            lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, lo - fixed[j]);
        }
    }
    if let Ok(sol) = lp.solve() {
        let psi: Vec<f64> = vars.iter().map(|&v| sol[v]).collect();
        // Re-evaluate at the LP scores rather than trusting the LP objective.
        best = best.min(violation(&|k| psi[k].clamp(gamma - 1.0, gamma)));
    }
    if best.is_finite() {
        best
    } else {
        violation(&|_| 0.0)
    }
}
