//! Frisch-Newton primal-dual interior point for the bounded-variable dual of
//! penalized quantile regression.
//!
//! Every observation row `i` and every penalty pseudo-row contributes a dual
//! variable `d_i` in `[0, 1]`. With `A` the `m x N` matrix whose columns are the
//! rows of the stacked design, the LP is
//!
//! ```text
//!     min  c'd   s.t.  A d = A d0,  0 <= d <= 1,     c = -(y, 0)
//! ```
//!
//! where `d0 = 1 - gamma` on observation rows and `1/2` on pseudo-rows. A
//! pseudo-row for coordinate `j` is `2 n lambda_j e_j` with response 0, so its
//! check loss at `gamma = 1/2` equals `n lambda_j |alpha_j|`. The regression
//! coefficients are the negated multipliers of the equality constraint.

use super::design::Design;
use crate::linalg;

/// Fraction of the distance to the boundary taken by each step.
const STEP_DAMPING: f64 = 0.99995;

pub(crate) struct LpProblem<'a> {
    pub design: &'a Design,
    pub y: &'a [f64],
    pub gamma: f64,
    /// Design columns carrying a pseudo-row, with the row's scale.
    pub pen_cols: Vec<usize>,
    pub pen_scale: Vec<f64>,
}

pub(crate) struct IpmOutcome {
    pub alpha: Vec<f64>,
    /// Primal LP variable `d` in `[0, 1]` (observation rows first, then pseudo-rows).
    pub dual: Vec<f64>,
    /// `1 - d`, carried separately for accuracy near the upper bound.
    pub slack: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LpProblem<'_> {
    fn rows(&self) -> usize {
        self.design.n + self.pen_cols.len()
    }

    /// `A' v`, length `N`.
    fn at_mul(&self, v: &[f64], out: &mut [f64]) {
        let n = self.design.n;
        for (i, o) in out[..n].iter_mut().enumerate() {
            *o = self.design.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
        for (k, (&j, &s)) in self.pen_cols.iter().zip(&self.pen_scale).enumerate() {
            out[n + k] = s * v[j];
        }
    }

    /// `A u`, length `m`.
    fn a_mul(&self, u: &[f64], out: &mut [f64]) {
        let n = self.design.n;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &ui) in u[..n].iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(self.design.row(i)) {
                *o += ui * x;
            }
        }
        for (k, (&j, &s)) in self.pen_cols.iter().zip(&self.pen_scale).enumerate() {
            out[j] += s * u[n + k];
        }
    }

    /// Lower triangle of `A diag(w) A'`.
    fn gram(&self, w: &[f64], out: &mut [f64]) {
        let (n, m) = (self.design.n, self.design.m);
        self.design.weighted_gram(&w[..n], out);
        for (k, (&j, &s)) in self.pen_cols.iter().zip(&self.pen_scale).enumerate() {
            out[j * m + j] += w[n + k] * s * s;
        }
    }

    /// Starting point of the LP variable, strictly inside the box.
    pub fn start_point(&self) -> Vec<f64> {
        let mut d = vec![1.0 - self.gamma; self.design.n];
        d.resize(self.rows(), 0.5);
        d
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the predictor-corrector iteration until the relative duality gap
/// drops below `tol`.
pub(crate) fn solve(prob: &LpProblem<'_>, tol: f64, max_iter: usize, warm: Option<&[f64]>) -> IpmOutcome {
    let m = prob.design.m;
    let nn = prob.rows();
    let mut c = vec![0.0; nn];
    for (ci, &yi) in c.iter_mut().zip(prob.y) {
        *ci = -yi;
    }
    let mut x = prob.start_point();
    let mut s: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
    let mut b = vec![0.0; m];
    prob.a_mul(&x, &mut b);

    let mut gram = vec![0.0; m * m];

    // Dual start: warm coefficients, or least squares for A'y ~ c.
    let mut ylp = match warm {
        Some(alpha) => alpha.iter().map(|a| -a).collect::<Vec<_>>(),
        None => {
            prob.gram(&vec![1.0; nn], &mut gram);
            linalg::cholesky(&mut gram, m);
            let mut rhs = vec![0.0; m];
            prob.a_mul(&c, &mut rhs);
            linalg::cholesky_solve(&gram, m, &mut rhs);
            rhs
        }
    };
    let mut aty = vec![0.0; nn];
    prob.at_mul(&ylp, &mut aty);
    let r: Vec<f64> = c.iter().zip(&aty).map(|(ci, ai)| ci - ai).collect();
    let shift = 1e-2 * (1.0 + r.iter().map(|v| v.abs()).sum::<f64>() / nn as f64);
    let mut z: Vec<f64> = r.iter().map(|&v| v.max(0.0) + shift).collect();
    let mut w: Vec<f64> = r.iter().map(|&v| (-v).max(0.0) + shift).collect();

    let mut q = vec![0.0; nn];
    let mut rd = vec![0.0; nn];
    let mut rp = vec![0.0; m];
    let mut t = vec![0.0; nn];
    let mut rhs_n = vec![0.0; nn];
    let mut tmp_m = vec![0.0; m];
    let mut dx = vec![0.0; nn];
    let mut dz = vec![0.0; nn];
    let mut dw = vec![0.0; nn];
    let mut dy;

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let gap = dot(&x, &z) + dot(&s, &w);
        let pobj = dot(&c, &x);
        if gap <= tol * (1.0 + pobj.abs()) {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        prob.at_mul(&ylp, &mut aty);
        for k in 0..nn {
            rd[k] = c[k] - aty[k] - z[k] + w[k];
            q[k] = 1.0 / (z[k] / x[k] + w[k] / s[k]);
        }
        prob.a_mul(&x, &mut tmp_m);
        for j in 0..m {
            rp[j] = b[j] - tmp_m[j];
        }
        prob.gram(&q, &mut gram);
        linalg::cholesky(&mut gram, m);

        // Newton direction for a right-hand side `t` of the complementarity rows.
        let direction = |t: &[f64], rhs_n: &mut [f64], dx: &mut [f64], tmp_m: &mut [f64]| -> Vec<f64> {
            for k in 0..nn {
                rhs_n[k] = q[k] * (t[k] - rd[k]);
            }
            prob.a_mul(rhs_n, tmp_m);
            let mut dy: Vec<f64> = rp.iter().zip(tmp_m.iter()).map(|(a, b)| a - b).collect();
            linalg::cholesky_solve(&gram, m, &mut dy);
            prob.at_mul(&dy, dx);
            for k in 0..nn {
                dx[k] = q[k] * dx[k] + rhs_n[k];
            }
            dy
        };

        // Affine-scaling predictor.
        for k in 0..nn {
            t[k] = w[k] - z[k];
        }
        dy = direction(&t, &mut rhs_n, &mut dx, &mut tmp_m);
        for k in 0..nn {
            dz[k] = -z[k] - z[k] * dx[k] / x[k];
            dw[k] = -w[k] + w[k] * dx[k] / s[k];
        }
        let ds: Vec<f64> = dx.iter().map(|v| -v).collect();
        let mut fp = (STEP_DAMPING * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
        let mut fd = (STEP_DAMPING * max_step(&z, &dz).min(max_step(&w, &dw))).min(1.0);

        if fp.min(fd) < 1.0 {
            // Mehrotra corrector with an adaptive centering target.
            let g: f64 = (0..nn)
                .map(|k| {
                    (z[k] + fd * dz[k]) * (x[k] + fp * dx[k]) + (w[k] + fd * dw[k]) * (s[k] + fp * ds[k])
                })
                .sum();
            let mu = gap * (g / gap).powi(3) / (2 * nn) as f64;
            let dxdz: Vec<f64> = (0..nn).map(|k| dx[k] * dz[k]).collect();
            let dsdw: Vec<f64> = (0..nn).map(|k| ds[k] * dw[k]).collect();
            for k in 0..nn {
                t[k] = mu / x[k] - mu / s[k] - z[k] + w[k] - dxdz[k] / x[k] + dsdw[k] / s[k];
            }
            dy = direction(&t, &mut rhs_n, &mut dx, &mut tmp_m);
            for k in 0..nn {
                dz[k] = mu / x[k] - z[k] - dxdz[k] / x[k] - z[k] * dx[k] / x[k];
                dw[k] = mu / s[k] - w[k] - dsdw[k] / s[k] + w[k] * dx[k] / s[k];
            }
            let ds: Vec<f64> = dx.iter().map(|v| -v).collect();
            fp = (STEP_DAMPING * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
            fd = (STEP_DAMPING * max_step(&z, &dz).min(max_step(&w, &dw))).min(1.0);
        }

        for k in 0..nn {
            x[k] += fp * dx[k];
            s[k] -= fp * dx[k];
            z[k] += fd * dz[k];
            w[k] += fd * dw[k];
        }
        for (yv, d) in ylp.iter_mut().zip(&dy) {
            *yv += fd * d;
        }
    }

    IpmOutcome {
        alpha: ylp.iter().map(|v| -v).collect(),
        dual: x,
        slack: s,
        iterations,
        converged,
    }
}
