//! Dense symmetric matrices: Cholesky factorization and cyclic Jacobi.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Default Jacobi stopping threshold on `off(A) / |A|_F`.
pub const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Square dense matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn scaled(&self, c: f64) -> Self {
        DenseMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                d = d.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        d
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.n, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// Lower Cholesky factor `L` with `A = L L^T`; `Numeric` error unless SPD.
    pub fn cholesky(&self) -> Result<DenseMatrix> {
        let n = self.n;
        let mut l = Self::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(Error::Numeric(format!(
                    "matrix is not positive definite (pivot {j} = {d:e})"
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Eigenvalues ascending; eigenvectors are the columns of the second value.
    pub fn symmetric_eigen(&self) -> Result<(Vec<f64>, DenseMatrix)> {
        jacobi(self, JACOBI_TOL)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

fn off_norm2(a: &DenseMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.n {
        for j in 0..a.n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s
}

/// Cyclic Jacobi on the symmetric part of `a`, stopping when the off-diagonal
/// Frobenius norm drops below `tol` times the full norm.
pub fn jacobi(a: &DenseMatrix, tol: f64) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.n;
    let mut a = a.symmetrized();
    let mut v = DenseMatrix::identity(n);
    let total: f64 = a.data.iter().map(|x| x * x).sum::<f64>();
    if total == 0.0 || n < 2 {
        return Ok(sorted(&a, v));
    }
    let target = tol * tol * total;
    let mut sweeps = 0;
    while off_norm2(&a) > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numeric(format!(
                "Jacobi did not converge in {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Ok(sorted(&a, v))
}

fn sorted(a: &DenseMatrix, v: DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = a.n;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let vals = order.iter().map(|&i| a[(i, i)]).collect();
    let vecs = DenseMatrix::from_fn(n, |r, c| v[(r, order[c])]);
    (vals, vecs)
}

/// Solves `A x = lambda B x` for symmetric `A` and SPD `B` by Cholesky reduction
/// `C = L^{-1} A L^{-T}`. Eigenvalues ascending, `B`-orthonormal eigenvectors as columns.
pub fn generalized_eigen(a: &DenseMatrix, b: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::Config(format!(
            "dimension mismatch {n} vs {}",
            b.dim()
        )));
    }
    let l = b.cholesky()?;
    // Y = L^{-1} A, then C = L^{-1} Y^T
    let y = lower_solve_columns(&l, &a.symmetrized());
    let c = lower_solve_columns(&l, &y.transpose());
    let (vals, w) = jacobi(&c, JACOBI_TOL)?;
    // x = L^{-T} w
    let mut x = DenseMatrix::zeros(n);
    for col in 0..n {
        for i in (0..n).rev() {
            let mut s = w[(i, col)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
    }
    Ok((vals, x))
}

/// `L^{-1} M` column by column.
fn lower_solve_columns(l: &DenseMatrix, m: &DenseMatrix) -> DenseMatrix {
    let n = l.dim();
    let mut out = DenseMatrix::zeros(n);
    for col in 0..n {
        for i in 0..n {
            let mut s = m[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * out[(k, col)];
            }
            out[(i, col)] = s / l[(i, i)];
        }
    }
    out
}
