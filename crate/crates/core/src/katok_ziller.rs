//! Katok-Ziller metrics and their explicit operators on the torus and the sphere.
//!
//! On the sphere the deformation enters through `E(phi) = eps^2 sin^2 phi`, the
//! value of `eps^2 g(V, V)` for the rotation field `V = d/dtheta`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SymTensorField, VectorField};
use crate::legendre::legendre_with_derivatives;
use crate::metric::{Chart, ChartPoint, FinslerMetric, KatokZiller, MetricRef};
use crate::quadrature::gauss_legendre;
use crate::randers::default_samples;
use crate::spectral::{
    default_galerkin_order, galerkin_problem, solve_eigen, sphere_spectrum, RadialProfile,
    SolverMeta, SpectralProblem, SpectrumResult,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KzSpace {
    Torus,
    Sphere,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KzParams {
    pub eps: f64,
    pub space: KzSpace,
}

impl KzParams {
    pub fn new(eps: f64, space: KzSpace) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidMetric(format!(
                "Katok-Ziller parameter must lie in [0, 1), got {eps}"
            )));
        }
        Ok(KzParams { eps, space })
    }

    /// `eps^2 g(V, V)` at polar angle `phi` (sphere) or anywhere (torus).
    pub fn deformation(&self, phi: f64) -> f64 {
        match self.space {
            KzSpace::Torus => self.eps * self.eps,
            KzSpace::Sphere => (self.eps * phi.sin()).powi(2),
        }
    }
}

/// Katok-Ziller metric of `g` along the Killing field `v`, checking
/// `eps^2 g(V, V) < 1` on a sample of the chart.
pub fn kz_metric(g: SymTensorField, v: VectorField, eps: f64, chart: Chart) -> Result<MetricRef> {
    let m = KatokZiller::new(g, v, eps, chart)?;
    for p in default_samples(chart)? {
        m.check(ChartPoint::on(chart, p[0], p[1]).coords())?;
    }
    Ok(Arc::new(m))
}

/// Coefficients `(a, b)` of `Delta = a d_x^2 + b d_y^2` on the flat torus.
pub fn torus_operator(eps: f64) -> (f64, f64) {
    let r = (1.0 - eps * eps).sqrt();
    let b = 2.0 * (1.0 - eps * eps) / (1.0 + r);
    (b * r, b)
}

/// Eigenvalues `4 pi^2 (a p^2 + b q^2)` of `-Delta` for `|p| <= pmax`, `|q| <= qmax`.
pub fn torus_spectrum(eps: f64, pmax: usize, qmax: usize) -> Result<SpectrumResult> {
    KzParams::new(eps, KzSpace::Torus)?;
    let (a, b) = torus_operator(eps);
    let (pm, qm) = (pmax as i64, qmax as i64);
    let mut vals = Vec::new();
    for p in -pm..=pm {
        for q in -qm..=qm {
            vals.push(4.0 * PI * PI * (a * (p * p) as f64 + b * (q * q) as f64));
        }
    }
    let meta = SolverMeta {
        basis: format!("fourier(|p| <= {pmax}, |q| <= {qmax})"),
        metric: format!("kz-torus(eps={eps})"),
        solver: "closed-form".into(),
        dimension: vals.len(),
        tolerance: 0.0,
        iterations: 0,
        symmetry_defect: 0.0,
    };
    Ok(SpectrumResult::new(vals, meta))
}

/// Explicit operator of the sphere metric in the polar chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereOperator {
    pub eps: f64,
}

impl SphereOperator {
    fn parts(&self, phi: f64) -> (f64, f64, f64) {
        let e = (self.eps * phi.sin()).powi(2);
        let r = (1.0 - e).sqrt();
        (e, r, 2.0 / (1.0 + r))
    }

    pub fn c_theta2(&self, phi: f64) -> f64 {
        let (e, r, c0) = self.parts(phi);
        c0 * (1.0 - e) * r / phi.sin().powi(2)
    }

    pub fn c_phi2(&self, phi: f64) -> f64 {
        let (e, _, c0) = self.parts(phi);
        c0 * (1.0 - e)
    }

    pub fn c_phi(&self, phi: f64) -> f64 {
        let (e, r, c0) = self.parts(phi);
        c0 * (e + r) / phi.tan()
    }

    /// Density of `Omega` against `dphi dtheta`.
    pub fn omega_density(&self, phi: f64) -> f64 {
        let (e, r, _) = self.parts(phi);
        phi.sin() / ((1.0 - e) * r)
    }

    pub fn profile(&self, phi: f64) -> RadialProfile {
        RadialProfile {
            c_phi2: self.c_phi2(phi),
            c_phi: self.c_phi(phi),
            c_theta2: self.c_theta2(phi),
            density: self.omega_density(phi),
        }
    }

    /// `Delta (f(phi) e^{i m theta}) / e^{i m theta}` from `f, f', f''`.
    pub fn apply_radial(&self, phi: f64, m: i64, f: [f64; 3]) -> f64 {
        self.c_phi2(phi) * f[2] + self.c_phi(phi) * f[1]
            - (m * m) as f64 * self.c_theta2(phi) * f[0]
    }
}

pub fn sphere_operator(eps: f64) -> Result<SphereOperator> {
    KzParams::new(eps, KzSpace::Sphere)?;
    Ok(SphereOperator { eps })
}

/// Expansion of `Delta Y_l^m` over `Y_k^m`, `k <= lmax`, in the round inner product.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicAction {
    /// Indexed by `k`; entries with `k < |m|` are zero.
    pub column: Vec<f64>,
    pub warning: Option<String>,
}

pub fn harmonic_action(eps: f64, l: usize, m: i64, lmax: usize) -> Result<Vec<f64>> {
    Ok(harmonic_action_with(eps, l, m, lmax, default_galerkin_order(lmax))?.column)
}

pub fn harmonic_action_with(
    eps: f64,
    l: usize,
    m: i64,
    lmax: usize,
    order: usize,
) -> Result<HarmonicAction> {
    let op = sphere_operator(eps)?;
    let am = m.unsigned_abs() as usize;
    if am > l || l > lmax {
        return Err(Error::Domain(format!(
            "need |m| <= l <= lmax, got m = {m}, l = {l}, lmax = {lmax}"
        )));
    }
    let warning = (order < 2 * lmax + 8).then(|| {
        format!(
            "quadrature order {order} below 2 lmax + 8 = {}; coefficients may be inaccurate",
            2 * lmax + 8
        )
    });
    let (t, w) = gauss_legendre(order)?;
    let mut column = vec![0.0; lmax + 1];
    for (ti, wi) in t.iter().zip(&w) {
        let phi = ti.acos();
        let p = legendre_with_derivatives(lmax, am, phi);
        let lp = op.apply_radial(phi, m, p[l - am]);
        for k in am..=lmax {
            column[k] += 2.0 * PI * wi * p[k - am][0] * lp;
        }
    }
    Ok(HarmonicAction { column, warning })
}

/// Galerkin problem at order `m` from the explicit sphere operator.
pub fn sphere_galerkin(eps: f64, lmax: usize, m: i64) -> Result<SpectralProblem> {
    let op = sphere_operator(eps)?;
    galerkin_problem(
        lmax,
        m,
        default_galerkin_order(lmax),
        &|phi| Ok(op.profile(phi)),
        format!("kz-sphere(eps={eps}, explicit operator)"),
    )
}

/// Lowest `k` Galerkin eigenvalues of `-Delta` over all orders `|m| <= lmax`.
pub fn kz_sphere_spectrum(eps: f64, lmax: usize, k: usize) -> Result<SpectrumResult> {
    sphere_spectrum(lmax, k, &|m| sphere_galerkin(eps, lmax, m))
}

/// Galerkin eigenvalue of `Delta` (negative) continuing `-l(l+1)` at order `m`.
pub fn galerkin_eigenvalue(eps: f64, l: usize, m: i64, lmax: usize) -> Result<f64> {
    let am = m.unsigned_abs() as usize;
    if am > l || l > lmax {
        return Err(Error::Domain(format!(
            "need |m| <= l <= lmax, got m = {m}, l = {l}, lmax = {lmax}"
        )));
    }
    let p = sphere_galerkin(eps, lmax, m)?;
    let r = solve_eigen(&p, p.dim())?;
    Ok(-r.eigenvalues[l - am])
}

/// Second-order expansion `-l(l+1) + eps^2 c(l, m)` of the eigenvalue of `Delta`.
pub fn perturbation_eigenvalue(l: usize, m: usize, eps: f64) -> f64 {
    let (l, m) = (l as f64, m as f64);
    let d = 2.0 * l - 1.0;
    let c = m * m / (2.0 * d) * (2.0 * (l + 1.0) + 3.0 * l * (l - 1.0) / (2.0 * l + 3.0))
        + 3.0 * l * (l - 1.0) / (2.0 * d) * (1.0 + (l * l + l - 1.0) / ((2.0 * l + 3.0) * d));
    -l * (l + 1.0) + eps * eps * c
}

/// Numerical `eps^2` coefficient of the Galerkin eigenvalue: Richardson
/// extrapolation of `(lambda(eps) + l(l+1)) / eps^2` from `eps` and `eps / 2`.
pub fn perturbation_coefficient(l: usize, m: i64, eps: f64, lmax: usize) -> Result<f64> {
    let l0 = (l * (l + 1)) as f64;
    let d = |e: f64| -> Result<f64> { Ok((galerkin_eigenvalue(e, l, m, lmax)? + l0) / (e * e)) };
    Ok((4.0 * d(0.5 * eps)? - d(eps)?) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{CovectorField, Expr, ScalarField};
    use crate::laplace::{laplacian_apply, operator_coefficients};
    use crate::legendre::SphericalHarmonic;
    use crate::metric::{KzSphere, KzTorus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere_g() -> SymTensorField {
        SymTensorField::round_sphere()
    }

    #[test]
    fn general_formula_matches_specialized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for eps in [0.1, 0.3, 0.6] {
            let gt = kz_metric(
                SymTensorField::identity(),
                CovectorField::constant(1.0, 0.0),
                eps,
                Chart::Torus,
            )
            .unwrap();
            let t = KzTorus::new(eps).unwrap();
            let gs = kz_metric(
                sphere_g(),
                CovectorField::constant(0.0, 1.0),
                eps,
                Chart::SpherePolar,
            )
            .unwrap();
            let s = KzSphere::new(eps).unwrap();
            for _ in 0..50 {
                let x = [rng.gen_range(0.05..3.1), rng.gen_range(0.0..6.28)];
                let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                assert!((gt.value(x, v) - t.value(x, v)).abs() < 1e-12);
                assert!((gs.value(x, v) - s.value(x, v)).abs() < 1e-12);
            }
        }
        let m = kz_metric(
            SymTensorField::identity(),
            CovectorField::constant(1.0, 0.0),
            0.6,
            Chart::Torus,
        )
        .unwrap();
        assert!((m.value([0.2, 0.2], [1.0, 0.0]) - 0.625).abs() < 1e-14);
        let m = kz_metric(
            SymTensorField::identity(),
            CovectorField::constant(1.0, 1.0),
            0.0,
            Chart::Torus,
        )
        .unwrap();
        assert!((m.value([0.2, 0.2], [3.0, 4.0]) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_formula_at_equator() {
        let eps: f64 = 0.4;
        let m = kz_metric(
            sphere_g(),
            CovectorField::constant(0.0, 1.0),
            eps,
            Chart::SpherePolar,
        )
        .unwrap();
        // E = eps^2, xi = (0, 1)
        let e = eps * eps;
        let want = ((1.0 - e) + e).sqrt() / (1.0 - e) - eps / (1.0 - e);
        assert!((m.value([PI / 2.0, 0.0], [0.0, 1.0]) - want).abs() < 1e-12);
    }

    #[test]
    fn kz_metric_rejects_large_killing_field() {
        let v = CovectorField {
            c: [
                Expr::parse("2").unwrap().into_ref(),
                Expr::constant(0.0).into_ref(),
            ],
        };
        let err = kz_metric(SymTensorField::identity(), v, 0.6, Chart::Torus).unwrap_err();
        assert!(matches!(err, Error::InvalidMetric(_)));
    }

    #[test]
    fn torus_operator_values() {
        assert_eq!(torus_operator(0.0), (1.0, 1.0));
        let (a, b) = torus_operator(0.6);
        assert!((a - 0.568888888888889).abs() < 1e-12);
        assert!((b - 0.711111111111111).abs() < 1e-12);
        let c = operator_coefficients(&KzTorus::new(0.6).unwrap(), &ChartPoint::torus(0.3, 0.7))
            .unwrap();
        assert!((c.sigma[0][0] - a).abs() < 1e-8 && (c.sigma[1][1] - b).abs() < 1e-8);
        assert!(c.sigma[0][1].abs() < 1e-8);
    }

    #[test]
    fn torus_spectrum_tables() {
        let r = torus_spectrum(0.0, 1, 1).unwrap();
        let f = 4.0 * PI * PI;
        let want = [(0.0, 1), (f, 4), (2.0 * f, 4)];
        assert_eq!(r.clusters.len(), 3);
        for (c, (v, mult)) in r.clusters.iter().zip(want) {
            assert!((c.value - v).abs() < 1e-9);
            assert_eq!(c.multiplicity, mult);
        }
        let r = torus_spectrum(0.6, 2, 2).unwrap();
        assert!((r.clusters[1].value - 22.4590).abs() < 1e-3);
        assert!((r.clusters[2].value - 28.0735).abs() < 1e-3);
        assert_eq!(r.eigenvalues.len(), 25);
    }

    #[test]
    fn sphere_operator_round_limit_and_quadrature() {
        let op = sphere_operator(0.0).unwrap();
        let phi = PI / 3.0;
        assert!((op.c_theta2(phi) - 4.0 / 3.0).abs() < 1e-14);
        assert!((op.c_phi2(phi) - 1.0).abs() < 1e-14);
        assert!((op.c_phi(phi) - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        let op = sphere_operator(0.3).unwrap();
        let m = KzSphere::new(0.3).unwrap();
        for phi in [0.5, 1.0, 1.5] {
            let c = operator_coefficients(&m, &ChartPoint::sphere(phi, 0.2)).unwrap();
            assert!((c.sigma[0][0] - op.c_phi2(phi)).abs() < 1e-5);
            assert!((c.sigma[1][1] - op.c_theta2(phi)).abs() < 1e-5);
            assert!((c.drift[0] - op.c_phi(phi)).abs() < 1e-5);
            assert!((c.vol_density - op.omega_density(phi)).abs() < 1e-5);
        }
    }

    #[test]
    fn first_harmonic_is_an_eigenfunction() {
        let op = sphere_operator(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let phi: f64 = rng.gen_range(0.01..PI - 0.01);
            let f = [phi.sin(), phi.cos(), -phi.sin()];
            let lu = op.apply_radial(phi, 1, f);
            assert!((lu + 1.82 * f[0]).abs() < 1e-12, "{phi}");
        }
        // and through the quadrature path on the metric
        let m = KzSphere::new(0.3).unwrap();
        let y = SphericalHarmonic::new(1, 1);
        let x = ChartPoint::sphere(1.1, 0.4);
        let lu = laplacian_apply(&m, &y, &x).unwrap();
        assert!((lu + 1.82 * y.eval(x.coords())).abs() < 1e-8);
    }

    #[test]
    fn harmonic_action_examples() {
        for (l, m) in [(0, 0), (2, 1), (3, 3), (5, -2)] {
            let c = harmonic_action(0.0, l, m, 8).unwrap();
            for (k, v) in c.iter().enumerate() {
                let want = if k == l { -((l * (l + 1)) as f64) } else { 0.0 };
                assert!((v - want).abs() < 1e-11, "l={l} m={m} k={k} v={v}");
            }
        }
        let c = harmonic_action(0.3, 1, 1, 10).unwrap();
        assert!((c[1] + 1.82).abs() < 1e-10);
        assert!(c.iter().enumerate().all(|(k, v)| k == 1 || v.abs() < 1e-10));
        let c = harmonic_action(0.1, 2, 0, 10).unwrap();
        for (k, v) in c.iter().enumerate() {
            if k % 2 == 1 {
                assert!(v.abs() < 1e-12, "odd k = {k}: {v}");
            } else if k != 2 {
                assert!(v.abs() < 0.1 * c[2].abs());
            }
        }
        let warned = harmonic_action_with(0.1, 2, 0, 10, 20).unwrap();
        assert!(warned.warning.is_some());
        assert!(harmonic_action(0.1, 1, 2, 10).is_err());
    }

    #[test]
    fn perturbation_formula_examples() {
        for eps in [0.0, 0.2, 0.7] {
            assert!((perturbation_eigenvalue(1, 1, eps) - (-2.0 + 2.0 * eps * eps)).abs() < 1e-14);
        }
        assert!((perturbation_eigenvalue(1, 0, 0.3) + 2.0).abs() < 1e-14);
        assert!((perturbation_eigenvalue(2, 0, 0.0) + 6.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_first_eigenvalue() {
        for eps in [0.1, 0.3, 0.5] {
            let r = kz_sphere_spectrum(eps, 10, 4).unwrap();
            assert!(r.eigenvalues[0].abs() < 1e-10);
            let l1 = r.eigenvalues[1];
            assert!(
                (l1 - (2.0 - 2.0 * eps * eps)).abs() < 1e-8,
                "eps={eps} l1={l1}"
            );
            assert!((r.eigenvalues[2] - l1).abs() < 1e-9);
        }
        let p = sphere_galerkin(0.3, 10, 1).unwrap();
        let r = solve_eigen(&p, 1).unwrap();
        assert!((r.eigenvalues[0] - 1.82).abs() < 1e-8);
        assert!(p.symmetry_defect < 1e-10);
    }

    #[test]
    fn plus_minus_m_coincide_and_orders_separate() {
        let eps = 0.3;
        for l in 2..5usize {
            let mut per_m = Vec::new();
            for m in 0..=l as i64 {
                let a = galerkin_eigenvalue(eps, l, m, 12).unwrap();
                let b = galerkin_eigenvalue(eps, l, -m, 12).unwrap();
                assert!((a - b).abs() < 1e-9);
                per_m.push(a);
            }
            for i in 0..per_m.len() {
                for j in 0..i {
                    assert!((per_m[i] - per_m[j]).abs() > 1e-4, "l={l}: {per_m:?}");
                }
            }
        }
    }

    #[test]
    fn galerkin_via_metric_quadrature_agrees() {
        let m = KzSphere::new(0.3).unwrap();
        let p = crate::spectral::assemble_eigenproblem(
            &m,
            &crate::spectral::BasisSpec::SphereHarmonics { lmax: 8, m: 2 },
        )
        .unwrap();
        let q = sphere_galerkin(0.3, 8, 2).unwrap();
        let a = solve_eigen(&p, 4).unwrap();
        let b = solve_eigen(&q, 4).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() < 1e-8 * y.abs().max(1.0), "{x} vs {y}");
        }
    }
}
