//! Test-only oracles, kept independent of the library's solver code paths.
#![allow(dead_code)]

use cpqr::{check_loss, Dataset};
use rand::Rng;

/// Penalized objective evaluated directly from the definition.
pub fn objective(data: &Dataset, tau: f64, lambda: f64, weights: &[f64], alpha: &[f64]) -> f64 {
    let p = data.p();
    let n = data.n();
    let mut loss = 0.0;
    for i in 0..n {
        let row = data.row(i);
        let on = data.q()[i] > tau;
        let mut fit = 0.0;
        for j in 0..p {
            fit += row[j] * alpha[j];
            if on {
                fit += row[j] * alpha[p + j];
            }
        }
        loss += check_loss(data.y()[i] - fit, data.gamma());
    }
    let pen: f64 = alpha.iter().zip(weights).map(|(a, w)| lambda * w * a.abs()).sum();
    loss / n as f64 + pen
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    for k in 0..m {
        let piv = (k..m).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[piv][k].abs() < 1e-10 {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..m {
            let f = a[i][k] / a[k][k];
            for j in k..m {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        subsets(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Brute-force minimum of the penalized check-loss objective at fixed tau.
///
/// Enumerates every vertex of the LP: a set Z of coordinates fixed at zero plus
/// |F| = 2p - |Z| observations interpolated exactly by the remaining coordinates.
pub fn brute_force_minimum(data: &Dataset, tau: f64, lambda: f64, weights: &[f64]) -> (f64, Vec<f64>) {
    let p = data.p();
    let m = 2 * p;
    let n = data.n();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let on = data.q()[i] > tau;
            let mut r = data.row(i).to_vec();
            r.extend(data.row(i).iter().map(|&v| if on { v } else { 0.0 }));
            r
        })
        .collect();
    let mut best = (f64::INFINITY, vec![0.0; m]);
    for zmask in 0u32..(1 << m) {
        let free: Vec<usize> = (0..m).filter(|j| zmask & (1 << j) == 0).collect();
        let mut combos = Vec::new();
        subsets(n, free.len(), 0, &mut Vec::new(), &mut combos);
        for basis in combos {
            let a: Vec<Vec<f64>> = basis.iter().map(|&i| free.iter().map(|&j| rows[i][j]).collect()).collect();
            let b: Vec<f64> = basis.iter().map(|&i| data.y()[i]).collect();
            let Some(sol) = solve_square(a, b) else { continue };
            let mut alpha = vec![0.0; m];
            for (k, &j) in free.iter().enumerate() {
                alpha[j] = sol[k];
            }
            let f = objective(data, tau, lambda, weights, &alpha);
            if f < best.0 {
                best = (f, alpha);
            }
        }
    }
    best
}

/// Random small instance whose augmented design has both regimes populated.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, p: usize, gamma: f64) -> (Dataset, f64) {
    loop {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut r = vec![1.0];
            r.extend((1..p).map(|_| rng.random_range(-2.0..2.0)));
            rows.push(r);
        }
        let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| rows[i].iter().sum::<f64>() * 0.5 + if q[i] > 0.5 { 1.0 } else { 0.0 } + rng.random_range(-1.5..1.5))
            .collect();
        let above = q.iter().filter(|&&v| v > 0.5).count();
        if above >= p + 1 && n - above >= p + 1 {
            return (Dataset::from_rows(y, &rows, q, gamma).unwrap(), 0.5);
        }
    }
}
