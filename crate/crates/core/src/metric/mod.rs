//! Finsler metrics on two-dimensional charts and the pointwise constructions
//! that only need the metric: indicatrix, vertical derivative, Legendre
//! transform, dual norm and conformal rescaling.

mod builtin;
mod registry;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldRef;
use crate::jet::{finite_difference_jet, Jet, V1, V2};

pub(crate) use builtin::conorm_sq;
pub use builtin::{Conformal, Custom, KatokZiller, KzSphere, KzTorus, Randers, Riemannian};
pub use registry::{FieldSpec, MetricFactory, MetricRegistry, MetricSpec};

/// Sphere points closer than this to a pole are rejected by pointwise operations.
pub const POLE_MARGIN: f64 = 1e-6;

/// Coordinate chart of a surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    /// `R^2 / Z^2` with coordinates `(x, y)` in `[0, 1)`.
    Torus,
    /// Polar coordinates `(phi, theta)` on the sphere minus the poles.
    SpherePolar,
    /// Cartesian coordinates on a plane patch.
    Plane,
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Chart::Torus => write!(f, "torus"),
            Chart::SpherePolar => write!(f, "sphere-polar"),
            Chart::Plane => write!(f, "plane"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint {
    pub chart: Chart,
    pub u: f64,
    pub v: f64,
}

impl ChartPoint {
    /// Torus point, coordinates reduced mod 1.
    pub fn torus(x: f64, y: f64) -> Self {
        ChartPoint {
            chart: Chart::Torus,
            u: x.rem_euclid(1.0),
            v: y.rem_euclid(1.0),
        }
    }

    /// Sphere point in polar coordinates `(phi, theta)`, theta reduced mod 2pi.
    pub fn sphere(phi: f64, theta: f64) -> Self {
        ChartPoint {
            chart: Chart::SpherePolar,
            u: phi,
            v: theta.rem_euclid(2.0 * PI),
        }
    }

    pub fn plane(x: f64, y: f64) -> Self {
        ChartPoint {
            chart: Chart::Plane,
            u: x,
            v: y,
        }
    }

    /// Builds a point on `chart`, normalizing periodic coordinates.
    pub fn on(chart: Chart, u: f64, v: f64) -> Self {
        match chart {
            Chart::Torus => Self::torus(u, v),
            Chart::SpherePolar => Self::sphere(u, v),
            Chart::Plane => Self::plane(u, v),
        }
    }

    pub fn coords(&self) -> [f64; 2] {
        [self.u, self.v]
    }

    /// Checks the pointwise validity region of the chart.
    pub fn validate(&self) -> Result<()> {
        if !self.u.is_finite() || !self.v.is_finite() {
            return Err(Error::Domain(format!("non-finite chart point {self:?}")));
        }
        if self.chart == Chart::SpherePolar && !(POLE_MARGIN..=PI - POLE_MARGIN).contains(&self.u) {
            return Err(Error::Domain(format!(
                "sphere point phi = {} is within {POLE_MARGIN} of a pole",
                self.u
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector(pub [f64; 2]);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covector(pub [f64; 2]);

impl TangentVector {
    pub fn new(a: f64, b: f64) -> Self {
        TangentVector([a, b])
    }
    pub fn norm(&self) -> f64 {
        self.0[0].hypot(self.0[1])
    }
    pub fn is_zero(&self) -> bool {
        self.0[0] == 0.0 && self.0[1] == 0.0
    }
}

impl Covector {
    pub fn new(a: f64, b: f64) -> Self {
        Covector([a, b])
    }
    /// Pairing `p(v)`.
    pub fn apply(&self, v: TangentVector) -> f64 {
        self.0[0] * v.0[0] + self.0[1] * v.0[1]
    }
    pub fn is_zero(&self) -> bool {
        self.0[0] == 0.0 && self.0[1] == 0.0
    }
}

/// A Finsler metric on a two-dimensional chart.
///
/// `value` is the raw evaluator and performs no validation; the free functions
/// of this module ([`eval_f`] and friends) validate their inputs first.
pub trait FinslerMetric: Send + Sync + fmt::Debug {
    /// Short human-readable description, used in result metadata.
    fn describe(&self) -> String;

    fn chart(&self) -> Chart;

    fn value(&self, x: [f64; 2], v: [f64; 2]) -> f64;

    /// Value and derivatives up to order three in `(x1, x2, v1, v2)`.
    ///
    /// The default falls back to finite differences of [`FinslerMetric::value`].
    fn jet(&self, x: [f64; 2], v: [f64; 2]) -> Jet {
        finite_difference_jet(|p| self.value([p[0], p[1]], [p[2], p[3]]), x, v)
    }

    /// Whether [`FinslerMetric::jet`] is exact rather than finite-difference based.
    fn exact_derivatives(&self) -> bool {
        false
    }

    /// Pointwise validity of the metric parameters at `x`.
    fn check(&self, _x: [f64; 2]) -> Result<()> {
        Ok(())
    }
}

pub type MetricRef = Arc<dyn FinslerMetric>;

/// Validates that `x` lies on the metric's chart and inside its validity region.
pub fn validate_point(metric: &dyn FinslerMetric, x: &ChartPoint) -> Result<()> {
    if x.chart != metric.chart() {
        return Err(Error::Domain(format!(
            "point on chart {} given to a metric on chart {}",
            x.chart,
            metric.chart()
        )));
    }
    x.validate()?;
    metric.check(x.coords())
}

/// `F(x, v)`.
pub fn eval_f(metric: &dyn FinslerMetric, x: &ChartPoint, v: TangentVector) -> Result<f64> {
    validate_point(metric, x)?;
    if v.is_zero() {
        return Err(Error::Domain("F evaluated on the zero vector".into()));
    }
    Ok(metric.value(x.coords(), v.0))
}

/// Euclidean direction `(cos phi, sin phi)`.
#[inline]
pub fn direction(phi: f64) -> [f64; 2] {
    let (s, c) = phi.sin_cos();
    [c, s]
}

/// The point of the indicatrix `F(x, .) = 1` in Euclidean direction `phi`.
pub fn indicatrix_point(
    metric: &dyn FinslerMetric,
    x: &ChartPoint,
    phi: f64,
) -> Result<TangentVector> {
    validate_point(metric, x)?;
    let e = direction(phi);
    let f = metric.value(x.coords(), e);
    Ok(TangentVector([e[0] / f, e[1] / f]))
}

/// `d_v F(x, v)`, exact for built-in metrics.
pub fn vertical_derivative(
    metric: &dyn FinslerMetric,
    x: &ChartPoint,
    v: TangentVector,
) -> Result<Covector> {
    validate_point(metric, x)?;
    if v.is_zero() {
        return Err(Error::Domain(
            "vertical derivative at the zero vector".into(),
        ));
    }
    let j = metric.jet(x.coords(), v.0);
    Ok(Covector([j.g[V1], j.g[V2]]))
}

/// `d_v F(x, v)` by central differences with step `1e-5 |v|`.
pub fn vertical_derivative_fd(
    metric: &dyn FinslerMetric,
    x: &ChartPoint,
    v: TangentVector,
) -> Result<Covector> {
    validate_point(metric, x)?;
    if v.is_zero() {
        return Err(Error::Domain(
            "vertical derivative at the zero vector".into(),
        ));
    }
    let h = 1e-5 * v.norm();
    let xc = x.coords();
    let d = |i: usize| {
        let mut vp = v.0;
        let mut vm = v.0;
        vp[i] += h;
        vm[i] -= h;
        (metric.value(xc, vp) - metric.value(xc, vm)) / (2.0 * h)
    };
    Ok(Covector([d(0), d(1)]))
}

/// Legendre transform `L_F(x, v) = F(x, v) d_v F(x, v)`.
pub fn legendre_forward(
    metric: &dyn FinslerMetric,
    x: &ChartPoint,
    v: TangentVector,
) -> Result<Covector> {
    validate_point(metric, x)?;
    if v.is_zero() {
        return Err(Error::Domain(
            "Legendre transform of the zero vector".into(),
        ));
    }
    let j = metric.jet(x.coords(), v.0);
    Ok(Covector([j.v * j.g[V1], j.v * j.g[V2]]))
}

const DUAL_COARSE_NODES: usize = 256;
const GOLDEN_TOL: f64 = 1e-10;

/// Dual norm `F*(x, p) = sup { p(v) : F(x, v) = 1 }`.
///
/// The supremum is located on a 256-node grid of Euclidean directions and refined
/// by golden-section search to `1e-10` in angle.
pub fn dual_norm(metric: &dyn FinslerMetric, x: &ChartPoint, p: Covector) -> Result<f64> {
    validate_point(metric, x)?;
    if p.is_zero() {
        return Err(Error::Domain("dual norm of the zero covector".into()));
    }
    Ok(dual_norm_unchecked(metric, x.coords(), p.0))
}

pub(crate) fn dual_norm_unchecked(metric: &dyn FinslerMetric, x: [f64; 2], p: [f64; 2]) -> f64 {
    let pairing = |phi: f64| {
        let e = direction(phi);
        (p[0] * e[0] + p[1] * e[1]) / metric.value(x, e)
    };
    let step = 2.0 * PI / DUAL_COARSE_NODES as f64;
    let (best, _) = (0..DUAL_COARSE_NODES)
        .map(|i| {
            let phi = i as f64 * step;
            (phi, pairing(phi))
        })
        .fold(
            (0.0, f64::NEG_INFINITY),
            |acc, c| if c.1 > acc.1 { c } else { acc },
        );
    let (phi, val) = golden_max(pairing, best - step, best + step, GOLDEN_TOL);
    val.max(pairing(best)).max(pairing(phi))
}

/// `F**(x, v) = sup p(v) / F*(x, p)` over covectors on the unit circle.
pub fn double_dual(metric: &dyn FinslerMetric, x: &ChartPoint, v: TangentVector) -> Result<f64> {
    validate_point(metric, x)?;
    if v.is_zero() {
        return Err(Error::Domain("double dual at the zero vector".into()));
    }
    let xc = x.coords();
    let pairing = |phi: f64| {
        let p = direction(phi);
        (p[0] * v.0[0] + p[1] * v.0[1]) / dual_norm_unchecked(metric, xc, p)
    };
    let step = 2.0 * PI / DUAL_COARSE_NODES as f64;
    let (best, _) = (0..DUAL_COARSE_NODES)
        .map(|i| {
            let phi = i as f64 * step;
            (phi, pairing(phi))
        })
        .fold(
            (0.0, f64::NEG_INFINITY),
            |acc, c| if c.1 > acc.1 { c } else { acc },
        );
    let (phi, val) = golden_max(pairing, best - step, best + step, GOLDEN_TOL);
    Ok(val.max(pairing(best)).max(pairing(phi)))
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let m = 0.5 * (a + b);
    (m, f(m))
}

/// The metric `e^f F`.
pub fn scale_conformal(metric: MetricRef, f: FieldRef) -> MetricRef {
    Arc::new(Conformal::new(metric, f))
}

/// Smallest eigenvalue of the vertical Hessian of `F^2 / 2` at `(x, v)`.
///
/// Strong convexity means this is positive for every nonzero `v`.
pub fn convexity_margin(
    metric: &dyn FinslerMetric,
    x: &ChartPoint,
    v: TangentVector,
) -> Result<f64> {
    validate_point(metric, x)?;
    if v.is_zero() {
        return Err(Error::Domain("convexity margin at the zero vector".into()));
    }
    let j = metric.jet(x.coords(), v.0);
    let h = |a: usize, b: usize| j.v * j.h[a][b] + j.g[a] * j.g[b];
    let (a, b, c) = (h(V1, V1), h(V1, V2), h(V2, V2));
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    Ok(mean - rad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{CovectorField, Expr, SymTensorField};

    fn kz(eps: f64) -> MetricRef {
        Arc::new(KzTorus::new(eps).unwrap())
    }

    fn euclid() -> MetricRef {
        Arc::new(Riemannian::new(SymTensorField::identity(), Chart::Plane))
    }

    fn randers_x(t: f64) -> MetricRef {
        Arc::new(
            Randers::new(
                SymTensorField::identity(),
                CovectorField::constant(t, 0.0),
                Chart::Plane,
            )
            .unwrap(),
        )
    }

    #[test]
    fn eval_f_examples() {
        let x = ChartPoint::torus(0.2, 0.7);
        let m = kz(0.6);
        assert!((eval_f(&*m, &x, TangentVector::new(1.0, 0.0)).unwrap() - 0.625).abs() < 1e-14);
        assert!((eval_f(&*m, &x, TangentVector::new(-1.0, 0.0)).unwrap() - 2.5).abs() < 1e-14);
        let p = ChartPoint::plane(0.0, 0.0);
        assert!(
            (eval_f(&*euclid(), &p, TangentVector::new(3.0, 4.0)).unwrap() - 5.0).abs() < 1e-15
        );
    }

    #[test]
    fn eval_f_rejects_zero_vector_and_wrong_chart() {
        let m = kz(0.6);
        let x = ChartPoint::torus(0.0, 0.0);
        assert!(matches!(
            eval_f(&*m, &x, TangentVector::new(0.0, 0.0)),
            Err(Error::Domain(_))
        ));
        let p = ChartPoint::plane(0.0, 0.0);
        assert!(matches!(
            eval_f(&*m, &p, TangentVector::new(1.0, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn indicatrix_examples() {
        let p = ChartPoint::plane(1.0, 2.0);
        let v = indicatrix_point(&*euclid(), &p, PI / 2.0).unwrap();
        assert!(v.0[0].abs() < 1e-15 && (v.0[1] - 1.0).abs() < 1e-15);
        let x = ChartPoint::torus(0.0, 0.0);
        let v = indicatrix_point(&*kz(0.6), &x, 0.0).unwrap();
        assert!((v.0[0] - 1.6).abs() < 1e-14 && v.0[1].abs() < 1e-15);
        let v = indicatrix_point(&*kz(0.6), &x, PI).unwrap();
        assert!((v.0[0] + 0.4).abs() < 1e-14 && v.0[1].abs() < 1e-14);
    }

    #[test]
    fn vertical_derivative_examples() {
        let p = ChartPoint::plane(0.0, 0.0);
        let d = vertical_derivative(&*euclid(), &p, TangentVector::new(3.0, 4.0)).unwrap();
        assert!((d.0[0] - 0.6).abs() < 1e-15 && (d.0[1] - 0.8).abs() < 1e-15);

        // torus KZ: on the indicatrix at angle theta the Hilbert form is
        // ((cos t - e)/(1 - e^2), sin t / sqrt(1 - e^2)), with tan t = sqrt(1-e^2) tan phi
        let eps = 0.6f64;
        let s = (1.0 - eps * eps).sqrt();
        let x = ChartPoint::torus(0.3, 0.4);
        for k in 0..12 {
            let t = 0.1 + k as f64 * 0.5;
            let xi = [t.cos(), t.sin() / s];
            let d = vertical_derivative(&*kz(eps), &x, TangentVector(xi)).unwrap();
            assert!((d.0[0] - (t.cos() - eps) / (s * s)).abs() < 1e-13);
            assert!((d.0[1] - t.sin() / s).abs() < 1e-13);
            let d2 = vertical_derivative(&*kz(eps), &x, TangentVector([2.0 * xi[0], 2.0 * xi[1]]))
                .unwrap();
            assert!((d2.0[0] - d.0[0]).abs() < 1e-10 && (d2.0[1] - d.0[1]).abs() < 1e-10);
            let fd = vertical_derivative_fd(&*kz(eps), &x, TangentVector(xi)).unwrap();
            assert!((fd.0[0] - d.0[0]).abs() < 1e-8 && (fd.0[1] - d.0[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn legendre_examples() {
        let p = ChartPoint::plane(0.0, 0.0);
        let l = legendre_forward(&*euclid(), &p, TangentVector::new(3.0, 4.0)).unwrap();
        assert!((l.0[0] - 3.0).abs() < 1e-14 && (l.0[1] - 4.0).abs() < 1e-14);

        // Randers |v| + 0.5 v_x at v = (1, 0): F = 1.5, d_vF = (1.5, 0), L = (2.25, 0)
        let m = randers_x(0.5);
        let v = TangentVector::new(1.0, 0.0);
        let l = legendre_forward(&*m, &p, v).unwrap();
        assert!((l.0[0] - 2.25).abs() < 1e-14 && l.0[1].abs() < 1e-14);
        // brute force: the covector attaining F* at L equals F(v)
        let brute = (0..200_000)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / 200_000.0;
                let e = direction(phi);
                (l.0[0] * e[0] + l.0[1] * e[1]) / m.value([0.0, 0.0], e)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((brute - 1.5).abs() < 1e-8);
        assert!((dual_norm(&*m, &p, l).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn dual_norm_examples() {
        let p = ChartPoint::plane(0.0, 0.0);
        assert!((dual_norm(&*euclid(), &p, Covector::new(3.0, 4.0)).unwrap() - 5.0).abs() < 1e-12);
        let m = randers_x(0.6);
        // unit ball of |v| + 0.6 v_x reaches v_x = 0.625 forward and -2.5 backward
        assert!((dual_norm(&*m, &p, Covector::new(1.0, 0.0)).unwrap() - 0.625).abs() < 1e-12);
        assert!((dual_norm(&*m, &p, Covector::new(-1.0, 0.0)).unwrap() - 2.5).abs() < 1e-12);
        let a = dual_norm(&*m, &p, Covector::new(0.3, -0.7)).unwrap();
        let b = dual_norm(&*m, &p, Covector::new(3.0, -7.0)).unwrap();
        assert!((b - 10.0 * a).abs() < 1e-10 * b);
        assert!(dual_norm(&*m, &p, Covector::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn double_dual_recovers_metric() {
        for (m, p) in [
            (randers_x(0.6), ChartPoint::plane(0.2, 0.7)),
            (kz(0.6), ChartPoint::torus(0.2, 0.7)),
        ] {
            for phi in [0.0, 1.0, 2.5, 4.0] {
                let v = TangentVector(direction(phi));
                let f = eval_f(&*m, &p, v).unwrap();
                assert!((double_dual(&*m, &p, v).unwrap() - f).abs() < 1e-9);
            }
        }
        assert!(double_dual(
            &*euclid(),
            &ChartPoint::plane(0.0, 0.0),
            TangentVector::new(0.0, 0.0)
        )
        .is_err());
    }

    #[test]
    fn conformal_scaling_examples() {
        let p = ChartPoint::plane(0.0, 0.0);
        let scaled = scale_conformal(euclid(), Expr::constant(2f64.ln()).into_ref());
        assert!((eval_f(&*scaled, &p, TangentVector::new(1.0, 0.0)).unwrap() - 2.0).abs() < 1e-15);
        let unchanged = scale_conformal(euclid(), Expr::constant(0.0).into_ref());
        assert_eq!(
            eval_f(&*unchanged, &p, TangentVector::new(0.3, 0.1)).unwrap(),
            eval_f(&*euclid(), &p, TangentVector::new(0.3, 0.1)).unwrap()
        );
        let f = Expr::parse("0.1*sin(2*pi*x)").unwrap();
        let base = kz(0.3);
        let scaled = scale_conformal(base.clone(), f.clone().into_ref());
        for k in 0..20 {
            let x = ChartPoint::torus(0.05 * k as f64, 0.3);
            let v = TangentVector(direction(0.7 * k as f64));
            let expected = f.eval_generic(x.coords()).exp() * eval_f(&*base, &x, v).unwrap();
            assert!((eval_f(&*scaled, &x, v).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_poles_are_rejected() {
        let m: MetricRef = Arc::new(KzSphere::new(0.3).unwrap());
        let x = ChartPoint::sphere(1e-8, 0.0);
        assert!(eval_f(&*m, &x, TangentVector::new(1.0, 0.0)).is_err());
        let x = ChartPoint::sphere(PI - 1e-7, 0.0);
        assert!(eval_f(&*m, &x, TangentVector::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn convexity_margin_positive_for_builtins() {
        let metrics: Vec<(MetricRef, ChartPoint)> = vec![
            (kz(0.9), ChartPoint::torus(0.1, 0.1)),
            (randers_x(0.95), ChartPoint::plane(0.0, 0.0)),
            (
                Arc::new(KzSphere::new(0.8).unwrap()),
                ChartPoint::sphere(1.2, 0.3),
            ),
        ];
        for (m, x) in metrics {
            for k in 0..64 {
                let v = TangentVector(direction(k as f64 * PI / 32.0));
                assert!(convexity_margin(&*m, &x, v).unwrap() > 0.0);
            }
        }
    }
}
