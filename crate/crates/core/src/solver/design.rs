use crate::model::Dataset;

/// Observation rows of an LP design, dense row-major `n x m`.
///
/// When the columns are exactly `(x, x 1{q > tau})` the weighted Gram matrix is
/// assembled from two `p x p` blocks instead of one `2p x 2p` accumulation.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub n: usize,
    pub m: usize,
    pub data: Vec<f64>,
    split: Option<Split>,
}

#[derive(Debug, Clone)]
struct Split {
    p: usize,
    above: Vec<bool>,
}

impl Design {
    /// Columns `keep` (indices into the `2p` augmented design) at threshold `tau`.
    pub fn threshold(data: &Dataset, tau: f64, keep: &[usize]) -> Self {
        let (n, p) = (data.n(), data.p());
        let above: Vec<bool> = data.q().iter().map(|&q| q > tau).collect();
        let mut out = Vec::with_capacity(n * keep.len());
        for i in 0..n {
            let row = data.row(i);
            for &j in keep {
                out.push(if j < p {
                    row[j]
                } else if above[i] {
                    row[j - p]
                } else {
                    0.0
                });
            }
        }
        let full = keep.len() == 2 * p && keep.iter().enumerate().all(|(k, &j)| k == j);
        Self {
            n,
            m: keep.len(),
            data: out,
            split: full.then_some(Split { p, above }),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    /// Lower triangle of `X' diag(w) X` written into `out` (`m x m`, row-major).
    pub fn weighted_gram(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.split {
            Some(split) => self.split_gram(split, w, out),
            None => {
                let m = self.m;
                for i in 0..self.n {
                    let row = self.row(i);
                    let wi = w[i];
                    for a in 0..m {
                        let xa = row[a] * wi;
                        if xa == 0.0 {
                            continue;
                        }
                        let dst = &mut out[a * m..a * m + a + 1];
                        for (d, &xb) in dst.iter_mut().zip(&row[..=a]) {
                            *d += xa * xb;
                        }
                    }
                }
            }
        }
    }

    fn split_gram(&self, split: &Split, w: &[f64], out: &mut [f64]) {
        let p = split.p;
        let m = self.m;
        let mut hi = vec![0.0; p * p];
        let mut lo = vec![0.0; p * p];
        for i in 0..self.n {
            let x = &self.row(i)[..p];
            let acc = if split.above[i] { &mut hi } else { &mut lo };
            let wi = w[i];
            for a in 0..p {
                let xa = x[a] * wi;
                if xa == 0.0 {
                    continue;
                }
                let dst = &mut acc[a * p..a * p + a + 1];
                for (d, &xb) in dst.iter_mut().zip(&x[..=a]) {
                    *d += xa * xb;
                }
            }
        }
        let sym = |g: &[f64], a: usize, b: usize| if a >= b { g[a * p + b] } else { g[b * p + a] };
        for r in 0..m {
            for c in 0..=r {
                out[r * m + c] = match (r < p, c < p) {
                    (true, true) => hi[r * p + c] + lo[r * p + c],
                    (false, true) => sym(&hi, r - p, c),
                    _ => hi[(r - p) * p + (c - p)],
                };
            }
        }
    }
}
