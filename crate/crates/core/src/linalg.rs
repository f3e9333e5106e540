//! Dense kernels for the interior-point normal equations and vertex recovery.
//! Matrices are row-major `m x m` slices.

/// In-place Cholesky factorization of a symmetric positive semidefinite matrix.
///
/// Only the lower triangle is read. Pivots that collapse below `PIVOT_FLOOR`
/// relative to the largest diagonal are replaced by a huge value, which zeroes
/// the matching component of the solution instead of failing. Returns the number
/// of replaced pivots.
pub(crate) fn cholesky(a: &mut [f64], m: usize) -> usize {
    const PIVOT_FLOOR: f64 = 1e-30;
    const HUGE: f64 = 1e128;
    let max_diag = (0..m).map(|i| a[i * m + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut replaced = 0;
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if !(d > PIVOT_FLOOR * max_diag) {
            replaced += 1;
            a[j * m + j] = HUGE;
            for i in j + 1..m {
                a[i * m + j] = 0.0;
            }
            continue;
        }
        let d = d.sqrt();
        a[j * m + j] = d;
        for i in j + 1..m {
            let (row_i, row_j) = (i * m, j * m);
            let mut s = a[row_i + j];
            for k in 0..j {
                s -= a[row_i + k] * a[row_j + k];
            }
            a[row_i + j] = s / d;
        }
    }
    replaced
}

/// Solves `L L' x = b` in place given the factor from [`cholesky`].
pub(crate) fn cholesky_solve(l: &[f64], m: usize, b: &mut [f64]) {
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * m + k] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in i + 1..m {
            s -= l[k * m + i] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub(crate) struct Lu {
    lu: Vec<f64>,
    perm: Vec<usize>,
    m: usize,
}

impl Lu {
    /// Returns `None` when a pivot is negligible relative to the column scale.
    pub(crate) fn factor(mut a: Vec<f64>, m: usize) -> Option<Self> {
        let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if m > 0 && scale == 0.0 {
            return None;
        }
        let mut perm: Vec<usize> = (0..m).collect();
        for k in 0..m {
            let (mut piv, mut best) = (k, a[k * m + k].abs());
            for i in k + 1..m {
                let v = a[i * m + k].abs();
                if v > best {
                    piv = i;
                    best = v;
                }
            }
            if best <= 1e-13 * scale {
                return None;
            }
            if piv != k {
                for j in 0..m {
                    a.swap(k * m + j, piv * m + j);
                }
                perm.swap(k, piv);
            }
            let d = a[k * m + k];
            for i in k + 1..m {
                let f = a[i * m + k] / d;
                a[i * m + k] = f;
                if f != 0.0 {
                    for j in k + 1..m {
                        a[i * m + j] -= f * a[k * m + j];
                    }
                }
            }
        }
        Some(Self { lu: a, perm, m })
    }

    /// Solves `A x = b`.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..m {
            for k in 0..i {
                x[i] -= self.lu[i * m + k] * x[k];
            }
        }
        for i in (0..m).rev() {
            for k in i + 1..m {
                x[i] -= self.lu[i * m + k] * x[k];
            }
            x[i] /= self.lu[i * m + i];
        }
        x
    }

    /// Solves `A' x = b`.
    pub(crate) fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let m = self.m;
        // A = P' L U, so A' x = b  <=>  U' L' (P x) = b.
        let mut z = b.to_vec();
        for i in 0..m {
            for k in 0..i {
                z[i] -= self.lu[k * m + i] * z[k];
            }
            z[i] /= self.lu[i * m + i];
        }
        for i in (0..m).rev() {
            for k in i + 1..m {
                z[i] -= self.lu[k * m + i] * z[k];
            }
        }
        let mut x = vec![0.0; m];
        for (k, &src) in self.perm.iter().enumerate() {
            x[src] = z[k];
        }
        x
    }
}
