//! Exact minimization of the weighted l1-penalized check-loss objective at a
//! fixed threshold:
//!
//! ```text
//!     (1/n) sum_i rho(y_i - X_i(tau)' alpha) + sum_j lambda w_j |alpha_j|
//! ```
//!
//! The problem is solved as a linear program by a primal-dual interior point
//! method. The interior solution is then snapped to the optimal vertex it points
//! at, which gives exact zeros (well-defined active sets) and an exact
//! subgradient certificate.

mod design;
mod ipm;
mod kkt;

use crate::error::{Error, Result};
use crate::model::{check_loss, empirical_risk, CoefVector, Dataset, ThresholdedModel};
use crate::linalg::Lu;
use design::Design;
use ipm::LpProblem;

/// Global multiplier and per-coordinate weights; coordinate `j` is penalized by
/// `lambda * weights[j] * |alpha_j|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub weights: Vec<f64>,
}

impl PenaltySpec {
    pub fn new(lambda: f64, weights: Vec<f64>) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid(format!("penalty level must be finite and >= 0, got {lambda}")));
        }
        if let Some(j) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!("penalty weight {j} must be finite and >= 0")));
        }
        Ok(Self { lambda, weights })
    }

    /// No penalty on any of `len` coordinates.
    pub fn none(len: usize) -> Self {
        Self { lambda: 0.0, weights: vec![0.0; len] }
    }

    pub fn level(&self, j: usize) -> f64 {
        self.lambda * self.weights[j]
    }

    fn levels(&self) -> Vec<f64> {
        (0..self.weights.len()).map(|j| self.level(j)).collect()
    }

    fn penalty(&self, coef: &CoefVector) -> f64 {
        (0..coef.len()).map(|j| self.level(j) * coef.alpha(j).abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Relative duality-gap tolerance of the interior point iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Coefficients smaller than this in absolute value are reported as zero.
    pub zero_clip: f64,
    /// Coefficients used to start the dual iterate.
    pub warm_start: Option<CoefVector>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, zero_clip: 1e-9, warm_start: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// Iteration limit hit; the last iterate is reported.
    MaxIter,
    /// Some coordinate is unidentified (identically zero column without a
    /// penalty, or a rank-deficient unpenalized design). Such coordinates are
    /// fixed at zero or chosen by the solver.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub coef: CoefVector,
    /// Empirical risk plus penalty, recomputed at `coef`.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// True when the reported solution is a vertex certified no worse than the
    /// interior iterate. False flags a possibly non-unique optimum where the
    /// interior (analytic-center) solution is reported instead.
    pub vertex: bool,
    /// Coordinates removed because their column is identically zero.
    pub excluded: Vec<usize>,
}

/// Whether each of the `2p` augmented columns has a nonzero entry at `tau`.
fn nonzero_columns(data: &Dataset, tau: f64) -> Vec<bool> {
    let p = data.p();
    let mut nz = vec![false; 2 * p];
    for i in 0..data.n() {
        let above = data.q()[i] > tau;
        for (j, &v) in data.row(i).iter().enumerate() {
            if v != 0.0 {
                nz[j] = true;
                if above {
                    nz[p + j] = true;
                }
            }
        }
    }
    nz
}

/// Minimizes the penalized objective at threshold `tau`.
pub fn solve_penalized_qr(data: &Dataset, tau: f64, penalty: &PenaltySpec, opts: &SolveOptions) -> Result<SolveReport> {
    let m = 2 * data.p();
    if penalty.weights.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: penalty.weights.len() });
    }
    let penalty = PenaltySpec::new(penalty.lambda, penalty.weights.clone())?;
    let levels = penalty.levels();
    let nz = nonzero_columns(data, tau);
    let keep: Vec<usize> = (0..m).filter(|&j| nz[j]).collect();
    let excluded: Vec<usize> = (0..m).filter(|&j| !nz[j]).collect();
    let degenerate = excluded.iter().any(|&j| levels[j] == 0.0);

    let design = Design::threshold(data, tau, &keep);
    let kept_levels: Vec<f64> = keep.iter().map(|&j| levels[j]).collect();
    let warm = warm_coords(data, opts, &keep)?;
    let core = solve_core(&design, data.y(), data.gamma(), &kept_levels, opts, warm.as_deref());

    let coef = scatter(&core.alpha, &keep, m)?;
    let objective = empirical_risk(data, &ThresholdedModel { coef: coef.clone(), tau })? + penalty.penalty(&coef);
    let kkt_residual = kkt::residual(data, tau, &levels, &coef, Some(&core.scores));
    let status = if degenerate || core.rank_deficient {
        SolveStatus::Degenerate
    } else if core.converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIter
    };
    Ok(SolveReport {
        coef,
        objective,
        kkt_residual,
        iterations: core.iterations,
        status,
        vertex: core.vertex,
        excluded,
    })
}

/// Unpenalized quantile regression on the coordinates in `support` (indices into
/// the stacked `2p` vector); all other coordinates are exactly zero.
pub fn solve_restricted_qr(data: &Dataset, tau: f64, support: &[usize], opts: &SolveOptions) -> Result<SolveReport> {
    let m = 2 * data.p();
    if let Some(&j) = support.iter().find(|&&j| j >= m) {
        return Err(Error::invalid(format!("support index {j} out of range for 2p = {m}")));
    }
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();

    let nz = nonzero_columns(data, tau);
    let keep: Vec<usize> = support.iter().copied().filter(|&j| nz[j]).collect();
    let excluded: Vec<usize> = support.iter().copied().filter(|&j| !nz[j]).collect();
    // Coordinates outside the support are pinned to zero; encode as infinite penalty.
    let levels: Vec<f64> = (0..m).map(|j| if support.contains(&j) { 0.0 } else { f64::INFINITY }).collect();

    let design = Design::threshold(data, tau, &keep);
    let warm = warm_coords(data, opts, &keep)?;
    let core = solve_core(&design, data.y(), data.gamma(), &vec![0.0; keep.len()], opts, warm.as_deref());
    let coef = scatter(&core.alpha, &keep, m)?;
    let objective = empirical_risk(data, &ThresholdedModel { coef: coef.clone(), tau })?;
    let kkt_residual = kkt::residual(data, tau, &levels, &coef, Some(&core.scores));
    let status = if !excluded.is_empty() || core.rank_deficient {
        SolveStatus::Degenerate
    } else if core.converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIter
    };
    Ok(SolveReport {
        coef,
        objective,
        kkt_residual,
        iterations: core.iterations,
        status,
        vertex: core.vertex,
        excluded,
    })
}

/// Smallest sup-norm violation of the subgradient optimality conditions at
/// `coef`, minimized over the scores of interpolated observations.
pub fn kkt_residual(data: &Dataset, tau: f64, penalty: &PenaltySpec, coef: &CoefVector) -> Result<f64> {
    data.check_coef(coef)?;
    if penalty.weights.len() != coef.len() {
        return Err(Error::DimensionMismatch { expected: coef.len(), got: penalty.weights.len() });
    }
    Ok(kkt::residual(data, tau, &penalty.levels(), coef, None))
}

fn warm_coords(data: &Dataset, opts: &SolveOptions, keep: &[usize]) -> Result<Option<Vec<f64>>> {
    match &opts.warm_start {
        None => Ok(None),
        Some(c) => {
            data.check_coef(c)?;
            Ok(Some(keep.iter().map(|&j| c.alpha(j)).collect()))
        }
    }
}

fn scatter(values: &[f64], keep: &[usize], m: usize) -> Result<CoefVector> {
    let mut alpha = vec![0.0; m];
    for (&j, &v) in keep.iter().zip(values) {
        alpha[j] = v;
    }
    CoefVector::from_alpha(&alpha)
}

struct CoreSolution {
    alpha: Vec<f64>,
    /// Observation scores `psi_i` suggested by the solve (length `n`).
    scores: Vec<f64>,
    iterations: usize,
    converged: bool,
    vertex: bool,
    rank_deficient: bool,
}

/// Sum of check losses plus `n`-scaled penalty, i.e. `n` times the objective.
fn scaled_objective(design: &Design, y: &[f64], gamma: f64, levels: &[f64], alpha: &[f64]) -> f64 {
    let n = design.n;
    let loss: f64 = (0..n)
        .map(|i| {
            let fit: f64 = design.row(i).iter().zip(alpha).map(|(a, b)| a * b).sum();
            check_loss(y[i] - fit, gamma)
        })
        .sum();
    let pen: f64 = levels.iter().zip(alpha).map(|(l, a)| l * a.abs()).sum();
    loss + n as f64 * pen
}

fn solve_core(design: &Design, y: &[f64], gamma: f64, levels: &[f64], opts: &SolveOptions, warm: Option<&[f64]>) -> CoreSolution {
    let (n, m) = (design.n, design.m);
    if m == 0 {
        let scores = y.iter().map(|&v| if v < 0.0 { gamma - 1.0 } else { gamma }).collect();
        return CoreSolution { alpha: vec![], scores, iterations: 0, converged: true, vertex: true, rank_deficient: false };
    }
    let pen_cols: Vec<usize> = (0..m).filter(|&j| levels[j] > 0.0).collect();
    let pen_scale: Vec<f64> = pen_cols.iter().map(|&j| 2.0 * n as f64 * levels[j]).collect();
    let prob = LpProblem { design, y, gamma, pen_cols, pen_scale };
    let out = ipm::solve(&prob, opts.tol, opts.max_iter, warm);

    let ipm_obj = scaled_objective(design, y, gamma, levels, &out.alpha);
    let mut scores: Vec<f64> = out.dual[..n].iter().map(|d| d - (1.0 - gamma)).collect();
    let unpenalized_rank_deficient = prob.pen_cols.len() < m && rank(design, &prob.pen_cols) < m;

    let vertex = recover_vertex(&prob, &out).filter(|v| {
        let obj = scaled_objective(design, y, gamma, levels, &v.alpha);
        obj <= ipm_obj + 1e-10 * (1.0 + ipm_obj.abs())
    });

    let (mut alpha, is_vertex) = match vertex {
        Some(v) => {
            let alpha = v.alpha.clone();
            certify_vertex(&prob, levels, &v, &mut scores);
            (alpha, true)
        }
        None => (snap_interior(&prob, levels, &out, ipm_obj), false),
    };
    for a in alpha.iter_mut() {
        if a.abs() < opts.zero_clip {
            *a = 0.0;
        }
    }
    CoreSolution {
        alpha,
        scores,
        iterations: out.iterations,
        converged: out.converged,
        vertex: is_vertex,
        rank_deficient: unpenalized_rank_deficient,
    }
}

/// Rank of the stacked system made of the design rows plus unit rows for
/// `unit_cols`.
fn rank(design: &Design, unit_cols: &[usize]) -> usize {
    let mut basis = Basis::new(design.m);
    for &j in unit_cols {
        let mut e = vec![0.0; design.m];
        e[j] = 1.0;
        basis.try_add(e);
    }
    for i in 0..design.n {
        if basis.full() {
            break;
        }
        basis.try_add(design.row(i).to_vec());
    }
    basis.len()
}

/// Incremental row-echelon basis used to pick linearly independent rows.
struct Basis {
    m: usize,
    rows: Vec<(Vec<f64>, usize)>,
}

impl Basis {
    fn new(m: usize) -> Self {
        Self { m, rows: Vec::with_capacity(m) }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn full(&self) -> bool {
        self.rows.len() == self.m
    }

    fn try_add(&mut self, mut v: Vec<f64>) -> bool {
        let scale = v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        if scale == 0.0 {
            return false;
        }
        for (row, pc) in &self.rows {
            let f = v[*pc] / row[*pc];
            if f != 0.0 {
                for (a, b) in v.iter_mut().zip(row) {
                    *a -= f * b;
                }
            }
        }
        let (pc, best) = v.iter().enumerate().fold((0, 0.0f64), |acc, (k, x)| if x.abs() > acc.1 { (k, x.abs()) } else { acc });
        if best <= 1e-9 * scale {
            return false;
        }
        self.rows.push((v, pc));
        true
    }
}

struct Vertex {
    alpha: Vec<f64>,
    /// Interpolated observation rows.
    basis: Vec<usize>,
    /// Coordinates determined by the basis rows (the rest are zero).
    free: Vec<usize>,
    lu: Lu,
}

/// Picks the `m` most interior LP variables that form a nonsingular basis and
/// solves for the vertex they define.
/// Dual values closer than this to a bound are not trusted to mark basic rows.
const WEAK_INTERIOR: f64 = 1e-6;

fn recover_vertex(prob: &LpProblem<'_>, out: &ipm::IpmOutcome) -> Option<Vertex> {
    let design = prob.design;
    let (n, m) = (design.n, design.m);
    let total = out.dual.len();
    let mut order: Vec<usize> = (0..total).collect();
    let interior = |k: usize| out.dual[k].min(out.slack[k]);
    let residual = |k: usize| {
        if k < n {
            let fit: f64 = design.row(k).iter().zip(&out.alpha).map(|(x, a)| x * a).sum();
            (prob.y[k] - fit).abs()
        } else {
            (prob.pen_scale[k - n] * out.alpha[prob.pen_cols[k - n]]).abs()
        }
    };
    // Clearly interior duals first; the rest by closeness to interpolation, which
    // picks the rows bounding the optimal face when the solution is not unique.
    let key = |k: usize| {
        let d = interior(k);
        if d >= WEAK_INTERIOR {
            (0u8, -d)
        } else {
            (1u8, residual(k))
        }
    };
    order.sort_by(|&a, &b| {
        let (ta, va) = key(a);
        let (tb, vb) = key(b);
        ta.cmp(&tb).then(va.total_cmp(&vb)).then(a.cmp(&b))
    });

    let mut basis = Basis::new(m);
    let mut obs = Vec::new();
    let mut zeroed = vec![false; m];
    for k in order {
        if basis.full() {
            break;
        }
        let row = if k < n {
            design.row(k).to_vec()
        } else {
            let mut e = vec![0.0; m];
            e[prob.pen_cols[k - n]] = 1.0;
            e
        };
        if basis.try_add(row) {
            if k < n {
                obs.push(k);
            } else {
                zeroed[prob.pen_cols[k - n]] = true;
            }
        }
    }
    if !basis.full() {
        return None;
    }
    let free: Vec<usize> = (0..m).filter(|&j| !zeroed[j]).collect();
    if free.len() != obs.len() {
        return None;
    }
    let f = free.len();
    let mut a = Vec::with_capacity(f * f);
    for &i in &obs {
        let row = design.row(i);
        a.extend(free.iter().map(|&j| row[j]));
    }
    let lu = Lu::factor(a, f)?;
    let rhs: Vec<f64> = obs.iter().map(|&i| prob.y[i]).collect();
    let sol = lu.solve(&rhs);
    let mut alpha = vec![0.0; m];
    for (&j, &v) in free.iter().zip(&sol) {
        alpha[j] = v;
    }
    if alpha.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Vertex { alpha, basis: obs, free, lu })
}

/// Computes exact scores for the interpolated rows of a vertex so that the
/// stationarity equations hold on the free coordinates.
fn certify_vertex(prob: &LpProblem<'_>, levels: &[f64], v: &Vertex, scores: &mut [f64]) {
    let design = prob.design;
    let (n, gamma) = (design.n, prob.gamma);
    let mut in_basis = vec![false; n];
    for &i in &v.basis {
        in_basis[i] = true;
    }
    let mut rhs: Vec<f64> = v
        .free
        .iter()
        .map(|&j| n as f64 * v.alpha[j].signum() * levels[j] * (v.alpha[j] != 0.0) as u8 as f64)
        .collect();
    for i in 0..n {
        if in_basis[i] {
            continue;
        }
        let row = design.row(i);
        let fit: f64 = row.iter().zip(&v.alpha).map(|(a, b)| a * b).sum();
        let r = prob.y[i] - fit;
        let psi = if kkt::is_zero_residual(r, prob.y[i]) {
            scores[i].clamp(gamma - 1.0, gamma)
        } else if r < 0.0 {
            gamma - 1.0
        } else {
            gamma
        };
        scores[i] = psi;
        for (rj, &j) in rhs.iter_mut().zip(&v.free) {
            *rj -= row[j] * psi;
        }
    }
    let psi_b = v.lu.solve_transpose(&rhs);
    for (&i, &psi) in v.basis.iter().zip(&psi_b) {
        scores[i] = psi;
    }
}

/// Interior fallback: zero coordinates whose pseudo-row is strictly inside its
/// box (the penalty is inactive there) when doing so does not raise the objective.
fn snap_interior(prob: &LpProblem<'_>, levels: &[f64], out: &ipm::IpmOutcome, ipm_obj: f64) -> Vec<f64> {
    let n = prob.design.n;
    let scale = out.alpha.iter().fold(1.0f64, |s, a| s.max(a.abs()));
    let mut snapped = out.alpha.clone();
    for (k, &j) in prob.pen_cols.iter().enumerate() {
        let d = out.dual[n + k].min(out.slack[n + k]);
        if d > 1e-3 && snapped[j].abs() <= 1e-6 * scale {
            snapped[j] = 0.0;
        }
    }
    let obj = scaled_objective(prob.design, prob.y, prob.gamma, levels, &snapped);
    if obj <= ipm_obj + 1e-9 * (1.0 + ipm_obj.abs()) {
        snapped
    } else {
        out.alpha.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_only(y: Vec<f64>, gamma: f64) -> Dataset {
        let n = y.len();
        Dataset::new(y, vec![1.0; n], 1, vec![0.0; n], gamma).unwrap()
    }

    #[test]
    fn median_and_quantile_of_three_points() {
        let d = intercept_only(vec![1.0, 2.0, 4.0], 0.5);
        let r = solve_penalized_qr(&d, 0.5, &PenaltySpec::none(2), &SolveOptions::default()).unwrap();
        assert_eq!(r.coef.beta[0], 2.0);
        assert_eq!(r.coef.delta[0], 0.0);
        assert_eq!(r.status, SolveStatus::Degenerate);
        assert!(r.vertex);

        let d = d.with_gamma(0.25).unwrap();
        let r = solve_penalized_qr(&d, 0.5, &PenaltySpec::none(2), &SolveOptions::default()).unwrap();
        assert_eq!(r.coef.beta[0], 1.0);
    }

    #[test]
    fn restricted_support_examples() {
        let d = intercept_only(vec![0.0, 0.0, 10.0], 0.5);
        let r = solve_restricted_qr(&d, 0.5, &[0], &SolveOptions::default()).unwrap();
        assert_eq!(r.coef.beta[0], 0.0);
        assert_eq!(r.status, SolveStatus::Converged);

        let r = solve_restricted_qr(&d, 0.5, &[], &SolveOptions::default()).unwrap();
        assert_eq!(r.coef, CoefVector::zeros(1));
        let risk0 = empirical_risk(&d, &ThresholdedModel { coef: CoefVector::zeros(1), tau: 0.5 }).unwrap();
        assert_eq!(r.objective, risk0);
        assert!(solve_restricted_qr(&d, 0.5, &[2], &SolveOptions::default()).is_err());
    }

    #[test]
    fn dominating_penalty_gives_zero() {
        let d = Dataset::from_rows(
            vec![1.0, 3.0, -2.0, 0.5, 4.0],
            &[vec![1.0, 0.3], vec![1.0, -1.0], vec![1.0, 2.0], vec![1.0, 0.0], vec![1.0, 1.5]],
            vec![0.1, 0.2, 0.6, 0.7, 0.9],
            0.5,
        )
        .unwrap();
        let pen = PenaltySpec::new(100.0, vec![1.0; 4]).unwrap();
        let r = solve_penalized_qr(&d, 0.5, &pen, &SolveOptions::default()).unwrap();
        assert_eq!(r.coef, CoefVector::zeros(2));
        assert_eq!(r.kkt_residual, 0.0);
        assert_eq!(kkt_residual(&d, 0.5, &pen, &CoefVector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn perturbed_solution_fails_kkt() {
        let d = Dataset::from_rows(
            vec![1.0, 3.0, -2.0, 0.5, 4.0, 2.2],
            &[vec![1.0, 0.3], vec![1.0, -1.0], vec![1.0, 2.0], vec![1.0, 0.0], vec![1.0, 1.5], vec![1.0, -0.7]],
            vec![0.1, 0.2, 0.6, 0.7, 0.9, 0.4],
            0.5,
        )
        .unwrap();
        let pen = PenaltySpec::new(0.05, vec![1.0; 4]).unwrap();
        let r = solve_penalized_qr(&d, 0.5, &pen, &SolveOptions::default()).unwrap();
        assert!(r.kkt_residual <= 1e-7, "kkt {}", r.kkt_residual);
        assert!(kkt_residual(&d, 0.5, &pen, &r.coef).unwrap() <= 1e-7);
        let j = r.coef.active_set()[0];
        let mut alpha = r.coef.to_alpha();
        alpha[j] += 1.0;
        let bumped = CoefVector::from_alpha(&alpha).unwrap();
        assert!(kkt_residual(&d, 0.5, &pen, &bumped).unwrap() > 1e-3);
    }

    #[test]
    fn zero_column_is_excluded() {
        // no q above tau: every delta column vanishes
        let d = Dataset::from_rows(
            vec![1.0, 2.0, 3.0],
            &[vec![1.0], vec![1.0], vec![1.0]],
            vec![0.0, 0.1, 0.2],
            0.5,
        )
        .unwrap();
        let pen = PenaltySpec::new(0.1, vec![1.0, 0.0]).unwrap();
        let r = solve_penalized_qr(&d, 0.5, &pen, &SolveOptions::default()).unwrap();
        assert_eq!(r.excluded, vec![1]);
        assert_eq!(r.status, SolveStatus::Degenerate);
        assert_eq!(r.coef.delta[0], 0.0);
    }

    #[test]
    fn rejects_bad_penalty() {
        let d = intercept_only(vec![1.0, 2.0], 0.5);
        assert!(solve_penalized_qr(&d, 0.0, &PenaltySpec { lambda: -1.0, weights: vec![1.0; 2] }, &SolveOptions::default()).is_err());
        assert!(solve_penalized_qr(&d, 0.0, &PenaltySpec::none(3), &SolveOptions::default()).is_err());
    }
}
