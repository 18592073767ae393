//! Truncated third-order Taylor jets in four variables.
//!
//! A [`Jet`] carries the value of a scalar together with its gradient, Hessian and
//! third-derivative tensor with respect to the four seed variables
//! `(x1, x2, v1, v2)`: the two chart coordinates of a base point and the two
//! components of a tangent vector. Every built-in Finsler metric is written once,
//! generically over [`Scalar`], and evaluated either on `f64` (values only) or on
//! `Jet` (exact derivatives up to order three).

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Number of seed variables carried by a jet.
pub const NVARS: usize = 4;

/// Seed index of the first chart coordinate.
pub const X1: usize = 0;
/// Seed index of the second chart coordinate.
pub const X2: usize = 1;
/// Seed index of the first tangent component.
pub const V1: usize = 2;
/// Seed index of the second tangent component.
pub const V2: usize = 3;

/// Arithmetic needed by the metric and field formulas.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: f64) -> Self;
    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
}

/// Value, gradient, Hessian and third derivatives of a scalar in four variables.
///
/// Only the entries with `i <= j <= k` are computed by the arithmetic; the full
/// symmetric arrays are kept filled so that callers can index freely.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; NVARS],
    pub h: [[f64; NVARS]; NVARS],
    pub t: [[[f64; NVARS]; NVARS]; NVARS],
}

const ZERO_H: [[f64; NVARS]; NVARS] = [[0.0; NVARS]; NVARS];
const ZERO_T: [[[f64; NVARS]; NVARS]; NVARS] = [[[0.0; NVARS]; NVARS]; NVARS];

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            g: [0.0; NVARS],
            h: ZERO_H,
            t: ZERO_T,
        }
    }

    /// The seed variable `idx` evaluated at `v`.
    pub fn variable(v: f64, idx: usize) -> Self {
        let mut j = Jet::constant(v);
        j.g[idx] = 1.0;
        j
    }

    /// Seeds a base point and a tangent vector as the four jet variables.
    pub fn seed(x: [f64; 2], v: [f64; 2]) -> ([Jet; 2], [Jet; 2]) {
        (
            [Jet::variable(x[0], X1), Jet::variable(x[1], X2)],
            [Jet::variable(v[0], V1), Jet::variable(v[1], V2)],
        )
    }

    fn fill_symmetric(&mut self) {
        for i in 0..NVARS {
            for j in i..NVARS {
                self.h[j][i] = self.h[i][j];
                for k in j..NVARS {
                    let c = self.t[i][j][k];
                    self.t[i][k][j] = c;
                    self.t[j][i][k] = c;
                    self.t[j][k][i] = c;
                    self.t[k][i][j] = c;
                    self.t[k][j][i] = c;
                }
            }
        }
    }

    /// Composition `f(self)` given `f` and its first three derivatives at `self.v`.
    pub fn chain(&self, f0: f64, f1: f64, f2: f64, f3: f64) -> Jet {
        let a = self;
        let mut r = Jet::constant(f0);
        for i in 0..NVARS {
            r.g[i] = f1 * a.g[i];
        }
        for i in 0..NVARS {
            for j in i..NVARS {
                r.h[i][j] = f2 * a.g[i] * a.g[j] + f1 * a.h[i][j];
                for k in j..NVARS {
                    r.t[i][j][k] = f3 * a.g[i] * a.g[j] * a.g[k]
                        + f2 * (a.h[i][j] * a.g[k] + a.h[i][k] * a.g[j] + a.h[j][k] * a.g[i])
                        + f1 * a.t[i][j][k];
                }
            }
        }
        r.fill_symmetric();
        r
    }

    pub fn scale(mut self, c: f64) -> Jet {
        self.v *= c;
        for i in 0..NVARS {
            self.g[i] *= c;
            for j in 0..NVARS {
                self.h[i][j] *= c;
                for k in 0..NVARS {
                    self.t[i][j][k] *= c;
                }
            }
        }
        self
    }
}

impl Default for Jet {
    fn default() -> Self {
        Jet::constant(0.0)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self += o;
        self
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        self.v += o.v;
        for i in 0..NVARS {
            self.g[i] += o.g[i];
            for j in 0..NVARS {
                self.h[i][j] += o.h[i][j];
                for k in 0..NVARS {
                    self.t[i][j][k] += o.t[i][j][k];
                }
            }
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, o: Jet) -> Jet {
        self -= o;
        self
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, o: Jet) {
        self.v -= o.v;
        for i in 0..NVARS {
            self.g[i] -= o.g[i];
            for j in 0..NVARS {
                self.h[i][j] -= o.h[i][j];
                for k in 0..NVARS {
                    self.t[i][j][k] -= o.t[i][j][k];
                }
            }
        }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, b: Jet) -> Jet {
        let a = &self;
        let mut r = Jet::constant(a.v * b.v);
        for i in 0..NVARS {
            r.g[i] = a.v * b.g[i] + a.g[i] * b.v;
        }
        for i in 0..NVARS {
            for j in i..NVARS {
                r.h[i][j] = a.v * b.h[i][j] + a.g[i] * b.g[j] + a.g[j] * b.g[i] + a.h[i][j] * b.v;
                for k in j..NVARS {
                    r.t[i][j][k] = a.v * b.t[i][j][k]
                        + a.g[i] * b.h[j][k]
                        + a.g[j] * b.h[i][k]
                        + a.g[k] * b.h[i][j]
                        + a.h[i][j] * b.g[k]
                        + a.h[i][k] * b.g[j]
                        + a.h[j][k] * b.g[i]
                        + a.t[i][j][k] * b.v;
                }
            }
        }
        r.fill_symmetric();
        r
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, o: Jet) {
        *self = *self * o;
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, b: Jet) -> Jet {
        self * b.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, c: f64) -> Jet {
        self.scale(1.0 / c)
    }
}

impl Scalar for Jet {
    fn cst(c: f64) -> Self {
        Jet::constant(c)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(
            s,
            0.5 / s,
            -0.25 / (s * self.v),
            0.375 / (s * self.v * self.v),
        )
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s, -c)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c, s)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e, e)
    }
    fn ln(self) -> Self {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }
    fn powi(self, n: i32) -> Self {
        let x = self.v;
        let nf = n as f64;
        self.chain(
            x.powi(n),
            nf * x.powi(n - 1),
            nf * (nf - 1.0) * x.powi(n - 2),
            nf * (nf - 1.0) * (nf - 2.0) * x.powi(n - 3),
        )
    }
    fn powf(self, p: f64) -> Self {
        let x = self.v;
        self.chain(
            x.powf(p),
            p * x.powf(p - 1.0),
            p * (p - 1.0) * x.powf(p - 2.0),
            p * (p - 1.0) * (p - 2.0) * x.powf(p - 3.0),
        )
    }
    fn recip(self) -> Self {
        let x = self.v;
        let r = 1.0 / x;
        self.chain(r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r)
    }
}

/// Builds a jet of `f` at `(x, v)` from central finite differences.
///
/// Step sizes grow with the derivative order so that round-off and truncation
/// stay balanced: `1e-5` for gradients, `1e-4` for the Hessian and `1e-3` for the
/// third derivatives (taken as differences of Hessians). Used by metrics that only
/// expose point evaluation.
pub fn finite_difference_jet<F>(f: F, x: [f64; 2], v: [f64; 2]) -> Jet
where
    F: Fn([f64; 4]) -> f64,
{
    let base = [x[0], x[1], v[0], v[1]];
    // vertical steps scale with |v|, horizontal steps are in chart units
    let vscale = (v[0] * v[0] + v[1] * v[1]).sqrt().max(1e-300);
    let unit = |i: usize| if i >= V1 { vscale } else { 1.0 };
    let shifted = |p: [f64; 4], i: usize, d: f64| {
        let mut q = p;
        q[i] += d;
        q
    };
    let hessian_at = |p: [f64; 4]| {
        let mut h = ZERO_H;
        let f0 = f(p);
        for i in 0..NVARS {
            let hi = 1e-4 * unit(i);
            h[i][i] = (f(shifted(p, i, hi)) - 2.0 * f0 + f(shifted(p, i, -hi))) / (hi * hi);
            for j in (i + 1)..NVARS {
                let hj = 1e-4 * unit(j);
                let pp = f(shifted(shifted(p, i, hi), j, hj));
                let pm = f(shifted(shifted(p, i, hi), j, -hj));
                let mp = f(shifted(shifted(p, i, -hi), j, hj));
                let mm = f(shifted(shifted(p, i, -hi), j, -hj));
                h[i][j] = (pp - pm - mp + mm) / (4.0 * hi * hj);
                h[j][i] = h[i][j];
            }
        }
        h
    };

    let mut jet = Jet::constant(f(base));
    for i in 0..NVARS {
        let hi = 1e-5 * unit(i);
        jet.g[i] = (f(shifted(base, i, hi)) - f(shifted(base, i, -hi))) / (2.0 * hi);
    }
    jet.h = hessian_at(base);
    for k in 0..NVARS {
        let hk = 1e-3 * unit(k);
        let hp = hessian_at(shifted(base, k, hk));
        let hm = hessian_at(shifted(base, k, -hk));
        for i in 0..NVARS {
            for j in 0..NVARS {
                jet.t[i][j][k] = (hp[i][j] - hm[i][j]) / (2.0 * hk);
            }
        }
    }
    // symmetrize the third-order tensor, FD noise breaks exact symmetry
    let t = jet.t;
    for i in 0..NVARS {
        for j in 0..NVARS {
            for k in 0..NVARS {
                jet.t[i][j][k] =
                    (t[i][j][k] + t[i][k][j] + t[j][i][k] + t[j][k][i] + t[k][i][j] + t[k][j][i])
                        / 6.0;
            }
        }
    }
    jet
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(x: [Jet; 2], v: [Jet; 2]) -> Jet {
        // mixes every primitive once
        let r = (v[0] * v[0] + v[1] * v[1] * 2.0).sqrt();
        let w = (x[0] * 3.0).sin() * x[1].cos() + (x[1] * 0.5).exp();
        r * w + v[0] / (x[0] + 2.0) + (x[1] + 3.0).ln() * v[1].powi(3) + (x[0] + 1.5).powf(1.5)
    }

    fn sample_f64(p: [f64; 4]) -> f64 {
        let r = (p[2] * p[2] + p[3] * p[3] * 2.0).sqrt();
        let w = (p[0] * 3.0).sin() * p[1].cos() + (p[1] * 0.5).exp();
        r * w + p[2] / (p[0] + 2.0) + (p[1] + 3.0).ln() * p[3].powi(3) + (p[0] + 1.5).powf(1.5)
    }

    #[test]
    fn jet_matches_finite_differences() {
        let x = [0.3, -0.2];
        let v = [0.7, 0.4];
        let (xj, vj) = Jet::seed(x, v);
        let exact = sample(xj, vj);
        let fd = finite_difference_jet(sample_f64, x, v);
        assert!((exact.v - sample_f64([x[0], x[1], v[0], v[1]])).abs() < 1e-14);
        for i in 0..NVARS {
            assert!((exact.g[i] - fd.g[i]).abs() < 1e-8, "g{i}");
            for j in 0..NVARS {
                assert!((exact.h[i][j] - fd.h[i][j]).abs() < 1e-5, "h{i}{j}");
                for k in 0..NVARS {
                    assert!(
                        (exact.t[i][j][k] - fd.t[i][j][k]).abs() < 1e-3,
                        "t{i}{j}{k}: {} vs {}",
                        exact.t[i][j][k],
                        fd.t[i][j][k]
                    );
                }
            }
        }
    }

    #[test]
    fn third_derivative_of_cubic_is_exact() {
        let x = Jet::variable(2.0, X1);
        let y = Jet::variable(-1.0, V2);
        let p = x * x * y;
        assert_eq!(p.v, -4.0);
        assert_eq!(p.g[X1], -4.0);
        assert_eq!(p.g[V2], 4.0);
        assert_eq!(p.h[X1][X1], -2.0);
        assert_eq!(p.h[X1][V2], 4.0);
        assert_eq!(p.t[X1][X1][V2], 2.0);
        assert_eq!(p.t[V2][X1][X1], 2.0);
        assert_eq!(p.t[X1][X1][X1], 0.0);
    }

    #[test]
    fn reciprocal_and_division_agree() {
        let a = Jet::variable(1.7, X2);
        let b = Jet::variable(0.4, V1) + a;
        let q1 = a / b;
        let q2 = a * b.recip();
        assert!((q1.t[X2][X2][V1] - q2.t[X2][X2][V1]).abs() < 1e-14);
    }
}
