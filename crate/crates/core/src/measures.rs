//! Angle form and volume density of the canonical volume, and the
//! Holmes-Thompson cross-check.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::signed_density_unchecked;
use crate::metric::{dual_norm_unchecked, validate_point, ChartPoint, FinslerMetric};
use crate::quadrature::BaseQuadrature;

/// Default number of fiber nodes.
pub const DEFAULT_FIBER_NODES: usize = 256;
/// Number of rays used to measure the dual unit disc.
pub const DUAL_BALL_RAYS: usize = 512;

/// Quadrature of the normalized angle form on one fiber.
///
/// Nodes are equispaced in an angle adapted to the indicatrix at the base point
/// (uniform on the ellipse fitted to the even part of `F` along `e1`, `e2` and
/// `(e1+e2)/sqrt 2`), which keeps the trapezoid rule spectrally accurate when
/// the chart metric is very anisotropic, as near the poles of the polar chart. For an isotropic
/// indicatrix the nodes are exactly `2 pi i / N`.
#[derive(Clone, Debug)]
pub struct FiberQuadrature {
    pub base: ChartPoint,
    /// Euclidean direction angles, strictly increasing in `[0, 2 pi)`.
    pub nodes: Vec<f64>,
    /// Angle-form weights, summing to `2 pi`.
    pub weights: Vec<f64>,
    /// Raw densities of `A^dA` against `dphi du dv` at the nodes.
    pub densities: Vec<f64>,
    /// Weights of the raw measure `A^dA`: density times `dphi` of each node.
    pub raw_weights: Vec<f64>,
}

impl FiberQuadrature {
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }

    /// Fiber integral of the raw density over `2 pi`: the volume density against `du dv`.
    pub fn mean_density(&self) -> f64 {
        self.raw_weights.iter().sum::<f64>() / (2.0 * PI)
    }
}

/// Adapted fiber nodes and `dphi` weights; see [`FiberQuadrature`].
pub(crate) fn fiber_nodes(
    metric: &dyn FinslerMetric,
    x: [f64; 2],
    n: usize,
) -> (Vec<f64>, Vec<f64>) {
    // even part of F, exactly sqrt(g) for Randers metrics
    let even = |v: [f64; 2]| 0.5 * (metric.value(x, v) + metric.value(x, [-v[0], -v[1]]));
    let q11 = even([1.0, 0.0]).powi(2);
    let q22 = even([0.0, 1.0]).powi(2);
    let qd = even([0.5f64.sqrt(), 0.5f64.sqrt()]).powi(2);
    let mut q12 = qd - 0.5 * (q11 + q22);
    // keep the fitted form comfortably positive definite
    let lim = 0.9 * (q11 * q22).sqrt();
    q12 = q12.clamp(-lim, lim);
    // A maps the unit circle onto the ellipse q = 1: A = L^{-T} with q = L L^T
    let l11 = q11.sqrt();
    let l21 = q12 / l11;
    let l22 = (q22 - l21 * l21).sqrt();
    let a = [[1.0 / l11, -l21 / (l11 * l22)], [0.0, 1.0 / l22]];
    let det = a[0][0] * a[1][1];
    let step = 2.0 * PI / n as f64;
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let (s, c) = (i as f64 * step).sin_cos();
            let v = [a[0][0] * c + a[0][1] * s, a[1][1] * s];
            let phi = v[1].atan2(v[0]).rem_euclid(2.0 * PI);
            (phi, step * det / (v[0] * v[0] + v[1] * v[1]))
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.into_iter().unzip()
}

/// Angle-form quadrature with `n` nodes.
pub fn fiber_quadrature(
    metric: &dyn FinslerMetric,
    x: &ChartPoint,
    n: usize,
) -> Result<FiberQuadrature> {
    if n < 16 {
        return Err(Error::Domain(format!(
            "fiber quadrature needs at least 16 nodes, got {n}"
        )));
    }
    validate_point(metric, x)?;
    let xc = x.coords();
    let (nodes, dphi) = fiber_nodes(metric, xc, n);
    let densities: Vec<f64> = nodes
        .iter()
        .map(|&phi| signed_density_unchecked(metric, xc, phi).abs())
        .collect();
    if densities.iter().any(|l| !l.is_finite() || *l <= 1e-12) {
        return Err(Error::DegenerateContact(format!(
            "canonical volume degenerates on the fiber over {xc:?}"
        )));
    }
    let raw_weights: Vec<f64> = densities.iter().zip(&dphi).map(|(l, d)| l * d).collect();
    let total: f64 = raw_weights.iter().sum();
    Ok(FiberQuadrature {
        base: *x,
        weights: raw_weights.iter().map(|r| 2.0 * PI * r / total).collect(),
        nodes,
        densities,
        raw_weights,
    })
}

/// Density of the volume `Omega` against `du dv`, with the default fiber resolution.
pub fn volume_density(metric: &dyn FinslerMetric, x: &ChartPoint) -> Result<f64> {
    volume_density_with(metric, x, DEFAULT_FIBER_NODES)
}

/// [`volume_density`] with `n` fiber nodes.
pub fn volume_density_with(metric: &dyn FinslerMetric, x: &ChartPoint, n: usize) -> Result<f64> {
    Ok(fiber_quadrature(metric, x, n)?.mean_density())
}

/// `(1/pi)` times the Euclidean area of the dual unit disc `{p : F*(x, p) < 1}`.
pub fn holmes_thompson_density(metric: &dyn FinslerMetric, x: &ChartPoint) -> Result<f64> {
    validate_point(metric, x)?;
    let xc = x.coords();
    let step = 2.0 * PI / DUAL_BALL_RAYS as f64;
    let area: f64 = (0..DUAL_BALL_RAYS)
        .map(|i| {
            let (s, c) = (i as f64 * step).sin_cos();
            let r = 1.0 / dual_norm_unchecked(metric, xc, [c, s]);
            0.5 * r * r * step
        })
        .sum();
    Ok(area / PI)
}

/// Total `Omega`-volume over a base quadrature.
pub fn total_volume(
    metric: &dyn FinslerMetric,
    quad: &BaseQuadrature,
    fiber_nodes: usize,
) -> Result<f64> {
    let parts: Result<Vec<f64>> = quad
        .points
        .par_iter()
        .zip(&quad.weights)
        .map(|(p, w)| {
            let x = ChartPoint::on(quad.chart, p[0], p[1]);
            Ok(w * volume_density_with(metric, &x, fiber_nodes)?)
        })
        .collect();
    Ok(parts?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{CovectorField, Expr, SymTensorField};
    use crate::metric::{
        scale_conformal, Chart, KzSphere, KzTorus, MetricRef, Randers, Riemannian,
    };
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn euclidean_weights_uniform() {
        let m = Riemannian::new(SymTensorField::identity(), Chart::Plane);
        let q = fiber_quadrature(&m, &ChartPoint::plane(1.0, 2.0), 64).unwrap();
        for w in &q.weights {
            assert!((w - 2.0 * PI / 64.0).abs() < 1e-14);
        }
        assert!((q.integrate(|_| 1.0) - 2.0 * PI).abs() < 1e-12);
        assert!(q.nodes.windows(2).all(|p| p[0] < p[1]));
        assert!(fiber_quadrature(&m, &ChartPoint::plane(0.0, 0.0), 8).is_err());
    }

    #[test]
    fn kz_torus_angle_form() {
        // alpha = (1 - e cos t) dt in the angle t, so the mean of cos t is -e/2
        let eps = 0.6f64;
        let b = (1.0 - eps * eps).sqrt();
        let m = KzTorus::new(eps).unwrap();
        let q = fiber_quadrature(&m, &ChartPoint::torus(0.2, 0.7), 256).unwrap();
        let mean_cos = q.integrate(|phi| (b * phi.sin()).atan2(phi.cos()).cos());
        assert!((mean_cos + PI * eps).abs() < 1e-10);
        assert!((q.mean_density() - 1.953125).abs() < 1e-12);
    }

    #[test]
    fn riemannian_and_randers_volumes() {
        let g = SymTensorField::parse("2 + 0.5*sin(2*pi*x)", "0.3", "1 + 0.2*cos(2*pi*y)").unwrap();
        let x = ChartPoint::torus(0.3, 0.4);
        let gm = g.eval([0.3f64, 0.4]);
        let det = gm[0][0] * gm[1][1] - gm[0][1] * gm[0][1];
        let riem = Riemannian::new(g.clone(), Chart::Torus);
        let randers = Randers::new(
            g,
            CovectorField::parse("0.4*sin(2*pi*y)", "0.5").unwrap(),
            Chart::Torus,
        )
        .unwrap();
        for m in [&riem as &dyn FinslerMetric, &randers] {
            assert!((volume_density(m, &x).unwrap() - det.sqrt()).abs() < 1e-10);
            assert!((holmes_thompson_density(m, &x).unwrap() - det.sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn holmes_thompson_examples() {
        let plane = ChartPoint::plane(0.0, 0.0);
        let e = Riemannian::new(SymTensorField::identity(), Chart::Plane);
        assert!((holmes_thompson_density(&e, &plane).unwrap() - 1.0).abs() < 1e-10);
        let r = Randers::new(
            SymTensorField::identity(),
            CovectorField::constant(0.6, 0.0),
            Chart::Plane,
        )
        .unwrap();
        assert!((holmes_thompson_density(&r, &plane).unwrap() - 1.0).abs() < 1e-8);
        let kz = KzTorus::new(0.6).unwrap();
        assert!(
            (holmes_thompson_density(&kz, &ChartPoint::torus(0.0, 0.0)).unwrap() - 1.953125).abs()
                < 1e-5
        );
    }

    #[test]
    fn kz_sphere_fiber_length_and_total_volume() {
        let eps = 0.3f64;
        let m = KzSphere::new(eps).unwrap();
        for phi in [0.3, 1.0, PI / 2.0, 2.5] {
            let e = eps * eps * f64::sin(phi).powi(2);
            let exact = phi.sin() / (1.0 - e).powf(1.5);
            let got = volume_density(&m, &ChartPoint::sphere(phi, 1.0)).unwrap();
            assert!((got - exact).abs() < 1e-10, "phi = {phi}");
        }
        let quad = BaseQuadrature::sphere(48, 4).unwrap();
        let vol = total_volume(&m, &quad, 128).unwrap();
        assert!((vol - 4.0 * PI / (1.0 - eps * eps)).abs() < 1e-8, "{vol}");
    }

    #[test]
    fn trapezoid_converges() {
        let m = Randers::new(
            SymTensorField::parse("1", "0", "1 + 0.3*sin(2*pi*x)").unwrap(),
            CovectorField::parse("0.5*cos(2*pi*y)", "0.2").unwrap(),
            Chart::Torus,
        )
        .unwrap();
        let x = ChartPoint::torus(0.1, 0.9);
        let a = volume_density_with(&m, &x, 128).unwrap();
        let b = volume_density_with(&m, &x, 256).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    fn builtins() -> Vec<MetricRef> {
        vec![
            Arc::new(KzTorus::new(0.6).unwrap()),
            Arc::new(KzTorus::new(0.2).unwrap()),
            Arc::new(
                Randers::new(
                    SymTensorField::parse("1 + 0.2*cos(2*pi*y)", "0.1", "1").unwrap(),
                    CovectorField::parse("0.3*sin(2*pi*y)", "0.1*cos(2*pi*x)").unwrap(),
                    Chart::Torus,
                )
                .unwrap(),
            ),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn holmes_thompson_matches_volume(u in 0.0..1.0f64, v in 0.0..1.0f64, which in 0usize..3) {
            let m = &builtins()[which];
            let x = ChartPoint::torus(u, v);
            let ht = holmes_thompson_density(m.as_ref(), &x).unwrap();
            let vd = volume_density(m.as_ref(), &x).unwrap();
            prop_assert!((ht - vd).abs() <= 1e-5);
        }

        #[test]
        fn sphere_holmes_thompson(phi in 0.2..2.9f64, theta in 0.0..6.28f64, eps in 0.0..0.9f64) {
            let m = KzSphere::new(eps).unwrap();
            let x = ChartPoint::sphere(phi, theta);
            let ht = holmes_thompson_density(&m, &x).unwrap();
            let vd = volume_density(&m, &x).unwrap();
            prop_assert!((ht - vd).abs() <= 1e-5);
        }

        #[test]
        fn conformal_scaling(u in 0.0..1.0f64, v in 0.0..1.0f64) {
            let base = builtins()[2].clone();
            let f = Expr::parse("0.3*sin(2*pi*x) + 0.2*cos(2*pi*y)").unwrap();
            let fx = f.eval_generic([u, v]);
            let scaled = scale_conformal(base.clone(), f.into_ref());
            let x = ChartPoint::torus(u, v);
            let a = volume_density(scaled.as_ref(), &x).unwrap();
            let b = volume_density(base.as_ref(), &x).unwrap();
            prop_assert!((a - (2.0 * fx).exp() * b).abs() <= 1e-6);
        }
    }
}
