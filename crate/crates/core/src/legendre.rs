//! Orthonormal associated Legendre functions and real spherical harmonics in
//! the polar chart `(phi, theta)`.
//!
//! `pbar(l, m)` is normalized so that `pbar(l, m)(cos phi) e^{i m theta}` has unit
//! `L^2` norm on the round sphere; equivalently the unnormalized `P_l^m e^{i m theta}`
//! has squared norm `4 pi / (2l+1) (l+m)!/(l-m)!`. No Condon-Shortley phase.

use std::f64::consts::PI;
use std::fmt;

use crate::field::ScalarField;
use crate::jet::{Jet, Scalar};

/// `pbar(l, m)` at `phi` for `l = m..=lmax`, index `l - m`.
///
/// Upward three-term recurrence in `l` at fixed `m`, stable for the degrees used
/// here. Generic so that jets seeded in `phi` carry the `phi` derivatives.
pub fn normalized_legendre<S: Scalar>(lmax: usize, m: usize, phi: S) -> Vec<S> {
    if m > lmax {
        return Vec::new();
    }
    let t = phi.cos();
    let s = phi.sin();
    let mut pmm = S::cst(0.5 / PI.sqrt());
    for k in 1..=m {
        let kf = k as f64;
        pmm = pmm * s * ((2.0 * kf + 1.0) / (2.0 * kf)).sqrt();
    }
    let mut out = Vec::with_capacity(lmax - m + 1);
    out.push(pmm);
    if lmax == m {
        return out;
    }
    let mf = m as f64;
    out.push(pmm * t * (2.0 * mf + 3.0).sqrt());
    let a = |l: f64| ((4.0 * l * l - 1.0) / (l * l - mf * mf)).sqrt();
    for l in m + 2..=lmax {
        let lf = l as f64;
        let next = (t * out[l - m - 1] - out[l - m - 2] / a(lf - 1.0)) * a(lf);
        out.push(next);
    }
    out
}

/// Real orthonormal harmonic: `sqrt 2 pbar cos(m theta)` for `m > 0`,
/// `sqrt 2 pbar sin(|m| theta)` for `m < 0`, `pbar` for `m = 0`.
pub fn real_harmonic<S: Scalar>(l: usize, m: i64, x: [S; 2]) -> S {
    let am = m.unsigned_abs() as usize;
    if am > l {
        return S::cst(0.0);
    }
    let p = normalized_legendre(l, am, x[0])[l - am];
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => p,
        std::cmp::Ordering::Greater => p * (x[1] * am as f64).cos() * 2f64.sqrt(),
        std::cmp::Ordering::Less => p * (x[1] * am as f64).sin() * 2f64.sqrt(),
    }
}

/// `pbar(l, m)` and its first two `phi` derivatives for `l = m..=lmax`.
pub fn legendre_with_derivatives(lmax: usize, m: usize, phi: f64) -> Vec<[f64; 3]> {
    normalized_legendre(lmax, m, Jet::variable(phi, 0))
        .into_iter()
        .map(|j| [j.v, j.g[0], j.h[0][0]])
        .collect()
}

/// A real spherical harmonic as a field on the polar chart.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SphericalHarmonic {
    pub l: usize,
    pub m: i64,
}

impl SphericalHarmonic {
    pub fn new(l: usize, m: i64) -> Self {
        SphericalHarmonic { l, m }
    }
}

impl fmt::Debug for SphericalHarmonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Y({}, {})", self.l, self.m)
    }
}

impl ScalarField for SphericalHarmonic {
    fn eval(&self, x: [f64; 2]) -> f64 {
        real_harmonic(self.l, self.m, x)
    }
    fn eval_jet(&self, x: [Jet; 2]) -> Jet {
        real_harmonic(self.l, self.m, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    #[test]
    fn low_degree_closed_forms() {
        let phi: f64 = 0.7;
        let (s, c) = phi.sin_cos();
        let p = normalized_legendre(2, 0, phi);
        assert!((p[0] - 0.5 / PI.sqrt()).abs() < 1e-15);
        assert!((p[1] - (3.0 / (4.0 * PI)).sqrt() * c).abs() < 1e-15);
        assert!((p[2] - (5.0 / (16.0 * PI)).sqrt() * (3.0 * c * c - 1.0)).abs() < 1e-15);
        let p = normalized_legendre(2, 1, phi);
        assert!((p[0] - (3.0 / (8.0 * PI)).sqrt() * s).abs() < 1e-15);
        assert!((p[1] - (15.0 / (8.0 * PI)).sqrt() * s * c).abs() < 1e-15);
        let p = normalized_legendre(2, 2, phi);
        assert!((p[0] - (15.0 / (32.0 * PI)).sqrt() * s * s).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_in_cos_phi() {
        let lmax = 20;
        let (t, w) = gauss_legendre(2 * lmax + 2).unwrap();
        for m in [0, 1, 5, 13] {
            let vals: Vec<Vec<f64>> = t
                .iter()
                .map(|ti| normalized_legendre(lmax, m, ti.acos()))
                .collect();
            for a in 0..=lmax - m {
                for b in 0..=lmax - m {
                    let g: f64 = 2.0
                        * PI
                        * vals
                            .iter()
                            .zip(&w)
                            .map(|(v, wi)| wi * v[a] * v[b])
                            .sum::<f64>();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-12, "m={m} a={a} b={b} g={g}");
                }
            }
        }
    }

    #[test]
    fn unnormalized_norm_matches_factorial_formula() {
        // P_3^2(t) = 15 t (1 - t^2)
        let (t, w) = gauss_legendre(12).unwrap();
        let norm2: f64 = 2.0
            * PI
            * t.iter()
                .zip(&w)
                .map(|(t, w)| w * (15.0 * t * (1.0 - t * t)).powi(2))
                .sum::<f64>();
        let want = 4.0 * PI / 7.0 * 120.0 / 1.0;
        assert!((norm2 - want).abs() < 1e-10 * want);
        let pbar = normalized_legendre(3, 2, 0.4f64)[1];
        let raw = 15.0 * 0.4f64.cos() * 0.4f64.sin().powi(2);
        assert!((pbar - raw / want.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn jet_derivatives_match_legendre_equation() {
        // pbar'' + cot(phi) pbar' + (l(l+1) - m^2 / sin^2) pbar = 0
        for m in 0..4usize {
            for phi in [0.3, 1.1, 2.6] {
                let d = legendre_with_derivatives(8, m, phi);
                for (i, [p, dp, d2p]) in d.iter().enumerate() {
                    let l = (m + i) as f64;
                    let s = f64::sin(phi);
                    let r = d2p + dp / phi.tan() + (l * (l + 1.0) - (m * m) as f64 / (s * s)) * p;
                    assert!(r.abs() < 1e-11, "l={l} m={m} r={r}");
                }
            }
        }
    }

    #[test]
    fn real_harmonics_signs() {
        let x = [1.0, 0.4];
        let y = SphericalHarmonic::new(1, 1);
        assert!((y.eval(x) - (3.0 / (4.0 * PI)).sqrt() * 1f64.sin() * 0.4f64.cos()).abs() < 1e-15);
        let y = SphericalHarmonic::new(1, -1);
        assert!((y.eval(x) - (3.0 / (4.0 * PI)).sqrt() * 1f64.sin() * 0.4f64.sin()).abs() < 1e-15);
        assert_eq!(real_harmonic(1, 3, x), 0.0);
    }
}
