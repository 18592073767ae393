//! Block locally optimal preconditioned conjugate gradient for the lowest
//! eigenpairs of a large sparse symmetric operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dense::{jacobi, DenseMatrix, JACOBI_TOL};
use crate::error::{Error, Result};

pub type LinearMap<'a> = dyn Fn(&[f64], &mut [f64]) + Sync + 'a;

#[derive(Clone, Copy, Debug)]
pub struct LobpcgOptions {
    /// Extra block columns beyond the requested count.
    pub guard: usize,
    /// Relative residual threshold.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        LobpcgOptions {
            guard: 6,
            tol: 1e-8,
            max_iter: 400,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LobpcgOutput {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Residual norms of the returned pairs.
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthonormalizes `cand` against `basis` and itself (two Gram-Schmidt passes),
/// dropping numerically dependent columns.
fn extend_orthonormal(basis: &mut Vec<Vec<f64>>, cand: Vec<Vec<f64>>) -> usize {
    let mut added = 0;
    for mut c in cand {
        let n0 = dot(&c, &c).sqrt();
        if !(n0 > 0.0) || !n0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for b in basis.iter() {
                let p = dot(b, &c);
                axpy(-p, b, &mut c);
            }
        }
        let n1 = dot(&c, &c).sqrt();
        if n1 > 1e-10 * n0 {
            c.iter_mut().for_each(|v| *v /= n1);
            basis.push(c);
            added += 1;
        }
    }
    added
}

/// Combination `sum_j q_j c[j][col]` for the columns of the coefficient matrix `c`.
fn combine(
    q: &[Vec<f64>],
    c: &DenseMatrix,
    rows: std::ops::Range<usize>,
    col: usize,
    n: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for j in rows {
        let w = c[(j, col)];
        if w != 0.0 {
            axpy(w, &q[j], &mut out);
        }
    }
    out
}

/// Lowest `k` eigenpairs of the symmetric operator `a` of dimension `n`;
/// `precond` should approximate the inverse of a positive shift of `a`.
pub fn lobpcg(
    n: usize,
    a: &LinearMap,
    precond: &LinearMap,
    k: usize,
    opts: LobpcgOptions,
) -> Result<LobpcgOutput> {
    let m = (k + opts.guard).min(n);
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "requested {k} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let apply = |x: &[f64]| {
        let mut y = vec![0.0; n];
        a(x, &mut y);
        y
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut x = Vec::with_capacity(m);
    if extend_orthonormal(&mut x, init) < m {
        return Err(Error::Numeric(
            "random starting block is rank deficient".into(),
        ));
    }
    let mut ax: Vec<Vec<f64>> = x.iter().map(|v| apply(v)).collect();
    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut values = vec![0.0; m];
    let mut residuals = vec![f64::INFINITY; m];

    for iter in 0..=opts.max_iter {
        // Rayleigh-Ritz on span[X, W, P]
        let mut q = x.clone();
        let mut aq = ax.clone();
        if iter > 0 {
            let r: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    let mut r = ax[i].clone();
                    axpy(-values[i], &x[i], &mut r);
                    r
                })
                .collect();
            residuals = r.iter().map(|v| dot(v, v).sqrt()).collect();
            let scale = values.iter().fold(1e-300f64, |s, v| s.max(v.abs()));
            if residuals[..k].iter().all(|r| *r <= opts.tol * scale) {
                return Ok(LobpcgOutput {
                    values: values[..k].to_vec(),
                    vectors: x[..k].to_vec(),
                    iterations: iter,
                    residuals: residuals[..k].to_vec(),
                });
            }
            if iter == opts.max_iter {
                break;
            }
            let w: Vec<Vec<f64>> = r
                .iter()
                .map(|ri| {
                    let mut z = vec![0.0; n];
                    precond(ri, &mut z);
                    z
                })
                .collect();
            let start = q.len();
            extend_orthonormal(&mut q, w);
            extend_orthonormal(&mut q, std::mem::take(&mut p));
            for v in &q[start..] {
                aq.push(apply(v));
            }
        }
        let dim = q.len();
        let g = DenseMatrix::from_fn(dim, |i, j| dot(&q[i], &aq[j]));
        let (vals, c) = jacobi(&g, JACOBI_TOL)?;
        values.copy_from_slice(&vals[..m]);
        let newx: Vec<Vec<f64>> = (0..m).map(|col| combine(&q, &c, 0..dim, col, n)).collect();
        ax = (0..m).map(|col| combine(&aq, &c, 0..dim, col, n)).collect();
        p = if dim > m {
            (0..m).map(|col| combine(&q, &c, m..dim, col, n)).collect()
        } else {
            Vec::new()
        };
        x = newx;
    }
    Err(Error::Numeric(format!(
        "LOBPCG did not converge in {} iterations (max residual {:e})",
        opts.max_iter,
        residuals[..k].iter().fold(0.0f64, |s, r| s.max(*r))
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_operator() {
        let n = 300;
        let d: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64 + 1.0).collect();
        let a = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = d[i] * x[i];
            }
        };
        let pc = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = x[i] / d[i];
            }
        };
        let out = lobpcg(n, &a, &pc, 5, LobpcgOptions::default()).unwrap();
        for (i, v) in out.values.iter().enumerate() {
            assert!((v - (i + 1) as f64).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn path_laplacian_with_degenerate_pairs() {
        // periodic path: eigenvalues 4 sin^2(pi j / n), doubly degenerate
        let n = 200;
        let a = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = 2.0 * x[i] - x[(i + 1) % n] - x[(i + n - 1) % n];
            }
        };
        let pc = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let opts = LobpcgOptions {
            max_iter: 2000,
            ..Default::default()
        };
        let out = lobpcg(n, &a, &pc, 5, opts).unwrap();
        let want = |j: f64| 4.0 * (std::f64::consts::PI * j / n as f64).sin().powi(2);
        let w = [0.0, want(1.0), want(1.0), want(2.0), want(2.0)];
        for (v, w) in out.values.iter().zip(w) {
            assert!((v - w).abs() < 1e-8, "{v} vs {w}");
        }
    }
}
