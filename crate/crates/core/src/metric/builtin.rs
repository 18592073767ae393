use std::fmt;
use std::sync::Arc;

use super::{Chart, FinslerMetric, MetricRef};
use crate::error::{Error, Result};
use crate::field::{CovectorField, FieldRef, FieldScalar, SymTensorField, VectorField};
use crate::jet::{Jet, Scalar};

/// Quadratic form `v^T g v`.
fn quad<S: Scalar>(g: &[[S; 2]; 2], v: &[S; 2]) -> S {
    g[0][0] * v[0] * v[0] + g[0][1] * v[0] * v[1] * 2.0 + g[1][1] * v[1] * v[1]
}

/// `g(a, b)`.
fn pair<S: Scalar>(g: &[[S; 2]; 2], a: &[S; 2], b: &[S; 2]) -> S {
    g[0][0] * a[0] * b[0] + g[0][1] * (a[0] * b[1] + a[1] * b[0]) + g[1][1] * a[1] * b[1]
}

/// Squared norm of a covector for the inverse of `g`.
pub(crate) fn conorm_sq(g: &[[f64; 2]; 2], t: &[f64; 2]) -> f64 {
    let det = g[0][0] * g[1][1] - g[0][1] * g[0][1];
    (g[1][1] * t[0] * t[0] - 2.0 * g[0][1] * t[0] * t[1] + g[0][0] * t[1] * t[1]) / det
}

fn check_spd(g: &[[f64; 2]; 2], x: [f64; 2]) -> Result<()> {
    let det = g[0][0] * g[1][1] - g[0][1] * g[0][1];
    if !(g[0][0] > 0.0 && det > 0.0) {
        return Err(Error::InvalidMetric(format!(
            "tensor {g:?} is not positive definite at {x:?}"
        )));
    }
    Ok(())
}

/// `sqrt(g_x(v, v))`.
#[derive(Clone, Debug)]
pub struct Riemannian {
    pub g: SymTensorField,
    chart: Chart,
}

impl Riemannian {
    pub fn new(g: SymTensorField, chart: Chart) -> Self {
        Riemannian { g, chart }
    }

    fn formula<S: FieldScalar>(&self, x: [S; 2], v: [S; 2]) -> S {
        quad(&self.g.eval(x), &v).sqrt()
    }
}

impl FinslerMetric for Riemannian {
    fn describe(&self) -> String {
        format!("riemannian({})", self.chart)
    }
    fn chart(&self) -> Chart {
        self.chart
    }
    fn value(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.formula(x, v)
    }
    fn jet(&self, x: [f64; 2], v: [f64; 2]) -> Jet {
        let (xj, vj) = Jet::seed(x, v);
        self.formula(xj, vj)
    }
    fn exact_derivatives(&self) -> bool {
        true
    }
    fn check(&self, x: [f64; 2]) -> Result<()> {
        check_spd(&self.g.eval(x), x)
    }
}

/// Randers metric `sqrt(g(v, v)) + theta(v)` with `|theta|_g < 1`.
#[derive(Clone, Debug)]
pub struct Randers {
    pub g: SymTensorField,
    pub theta: CovectorField,
    chart: Chart,
}

impl Randers {
    /// Builds the metric; the norm bound is checked lazily at each evaluated point.
    pub fn new(g: SymTensorField, theta: CovectorField, chart: Chart) -> Result<Self> {
        Ok(Randers { g, theta, chart })
    }

    fn formula<S: FieldScalar>(&self, x: [S; 2], v: [S; 2]) -> S {
        let g = self.g.eval(x);
        let t = self.theta.eval(x);
        quad(&g, &v).sqrt() + t[0] * v[0] + t[1] * v[1]
    }

    /// `|theta|_g` at `x`.
    pub fn theta_norm(&self, x: [f64; 2]) -> f64 {
        conorm_sq(&self.g.eval(x), &self.theta.eval(x)).sqrt()
    }
}

impl FinslerMetric for Randers {
    fn describe(&self) -> String {
        format!("randers({})", self.chart)
    }
    fn chart(&self) -> Chart {
        self.chart
    }
    fn value(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.formula(x, v)
    }
    fn jet(&self, x: [f64; 2], v: [f64; 2]) -> Jet {
        let (xj, vj) = Jet::seed(x, v);
        self.formula(xj, vj)
    }
    fn exact_derivatives(&self) -> bool {
        true
    }
    fn check(&self, x: [f64; 2]) -> Result<()> {
        check_spd(&self.g.eval(x), x)?;
        let n = self.theta_norm(x);
        if !(n < 1.0) {
            return Err(Error::InvalidMetric(format!(
                "Randers form has g-norm {n} >= 1 at {x:?}"
            )));
        }
        Ok(())
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidMetric(format!(
            "Katok-Ziller parameter must lie in [0, 1), got {eps}"
        )));
    }
    Ok(())
}

/// Katok-Ziller metric on the flat torus for the Killing field `d/dx`:
/// `(sqrt(a^2 + (1 - e^2) b^2) - e a) / (1 - e^2)` at `v = (a, b)`.
#[derive(Clone, Copy, Debug)]
pub struct KzTorus {
    pub eps: f64,
}

impl KzTorus {
    pub fn new(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(KzTorus { eps })
    }

    fn formula<S: Scalar>(&self, v: [S; 2]) -> S {
        let e2 = self.eps * self.eps;
        ((v[0] * v[0] + v[1] * v[1] * (1.0 - e2)).sqrt() - v[0] * self.eps) / (1.0 - e2)
    }
}

impl FinslerMetric for KzTorus {
    fn describe(&self) -> String {
        format!("kz-torus(eps={})", self.eps)
    }
    fn chart(&self) -> Chart {
        Chart::Torus
    }
    fn value(&self, _x: [f64; 2], v: [f64; 2]) -> f64 {
        self.formula(v)
    }
    fn jet(&self, x: [f64; 2], v: [f64; 2]) -> Jet {
        let (_, vj) = Jet::seed(x, v);
        self.formula(vj)
    }
    fn exact_derivatives(&self) -> bool {
        true
    }
}

/// Katok-Ziller metric on the round sphere for the rotation field `d/dtheta`,
/// in polar coordinates `(phi, theta)`, with `E = e^2 sin^2(phi)`:
/// `(sqrt((1 - E) a^2 + sin^2(phi) b^2) - e sin^2(phi) b) / (1 - E)` at `v = (a, b)`.
#[derive(Clone, Copy, Debug)]
pub struct KzSphere {
    pub eps: f64,
}

impl KzSphere {
    pub fn new(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(KzSphere { eps })
    }

    fn formula<S: Scalar>(&self, x: [S; 2], v: [S; 2]) -> S {
        let s2 = x[0].sin() * x[0].sin();
        let one_m_e = -(s2 * (self.eps * self.eps)) + 1.0;
        ((one_m_e * v[0] * v[0] + s2 * v[1] * v[1]).sqrt() - s2 * v[1] * self.eps) / one_m_e
    }
}

impl FinslerMetric for KzSphere {
    fn describe(&self) -> String {
        format!("kz-sphere(eps={})", self.eps)
    }
    fn chart(&self) -> Chart {
        Chart::SpherePolar
    }
    fn value(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.formula(x, v)
    }
    fn jet(&self, x: [f64; 2], v: [f64; 2]) -> Jet {
        let (xj, vj) = Jet::seed(x, v);
        self.formula(xj, vj)
    }
    fn exact_derivatives(&self) -> bool {
        true
    }
}

/// Katok-Ziller deformation of a Riemannian metric `g` along a Killing field `V`:
///
/// `F(x, v) = (sqrt(g(v,v)(1 - e^2 g(V,V)) + e^2 g(V,v)^2) - e g(V,v)) / (1 - e^2 g(V,V))`.
///
/// The Killing property of `V` is the caller's responsibility.
#[derive(Clone, Debug)]
pub struct KatokZiller {
    pub g: SymTensorField,
    pub killing: VectorField,
    pub eps: f64,
    chart: Chart,
}

impl KatokZiller {
    pub fn new(g: SymTensorField, killing: VectorField, eps: f64, chart: Chart) -> Result<Self> {
        check_eps(eps)?;
        Ok(KatokZiller {
            g,
            killing,
            eps,
            chart,
        })
    }

    fn formula<S: FieldScalar>(&self, x: [S; 2], v: [S; 2]) -> S {
        let g = self.g.eval(x);
        let k = self.killing.eval(x);
        let e = self.eps;
        let gvv = quad(&g, &k);
        let gvx = pair(&g, &k, &v);
        let d = -(gvv * (e * e)) + 1.0;
        ((quad(&g, &v) * d + gvx * gvx * (e * e)).sqrt() - gvx * e) / d
    }
}

impl FinslerMetric for KatokZiller {
    fn describe(&self) -> String {
        format!("katok-ziller(eps={}, {})", self.eps, self.chart)
    }
    fn chart(&self) -> Chart {
        self.chart
    }
    fn value(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.formula(x, v)
    }
    fn jet(&self, x: [f64; 2], v: [f64; 2]) -> Jet {
        let (xj, vj) = Jet::seed(x, v);
        self.formula(xj, vj)
    }
    fn exact_derivatives(&self) -> bool {
        true
    }
    fn check(&self, x: [f64; 2]) -> Result<()> {
        let g = self.g.eval(x);
        check_spd(&g, x)?;
        let k = self.killing.eval(x);
        let bound = self.eps * self.eps * quad(&g, &k);
        if !(bound < 1.0) {
            return Err(Error::InvalidMetric(format!(
                "e^2 g(V, V) = {bound} >= 1 at {x:?}"
            )));
        }
        Ok(())
    }
}

type Evaluator = dyn Fn([f64; 2], [f64; 2]) -> f64 + Send + Sync;

/// User-supplied metric; derivatives come from finite differences.
#[derive(Clone)]
pub struct Custom {
    name: String,
    chart: Chart,
    f: Arc<Evaluator>,
}

impl Custom {
    pub fn new<F>(name: impl Into<String>, chart: Chart, f: F) -> Self
    where
        F: Fn([f64; 2], [f64; 2]) -> f64 + Send + Sync + 'static,
    {
        Custom {
            name: name.into(),
            chart,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for Custom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Custom")
            .field("name", &self.name)
            .field("chart", &self.chart)
            .finish()
    }
}

impl FinslerMetric for Custom {
    fn describe(&self) -> String {
        format!("custom:{}({})", self.name, self.chart)
    }
    fn chart(&self) -> Chart {
        self.chart
    }
    fn value(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        (self.f)(x, v)
    }
}

/// `e^{f(x)} F(x, v)`.
#[derive(Clone, Debug)]
pub struct Conformal {
    base: MetricRef,
    factor: FieldRef,
}

impl Conformal {
    pub fn new(base: MetricRef, factor: FieldRef) -> Self {
        Conformal { base, factor }
    }

    pub fn base(&self) -> &MetricRef {
        &self.base
    }
}

impl FinslerMetric for Conformal {
    fn describe(&self) -> String {
        format!("conformal({})", self.base.describe())
    }
    fn chart(&self) -> Chart {
        self.base.chart()
    }
    fn value(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.factor.eval(x).exp() * self.base.value(x, v)
    }
    fn jet(&self, x: [f64; 2], v: [f64; 2]) -> Jet {
        if !self.base.exact_derivatives() {
            return crate::jet::finite_difference_jet(
                |p| self.value([p[0], p[1]], [p[2], p[3]]),
                x,
                v,
            );
        }
        let (xj, _) = Jet::seed(x, v);
        self.factor.eval_jet(xj).exp() * self.base.jet(x, v)
    }
    fn exact_derivatives(&self) -> bool {
        self.base.exact_derivatives()
    }
    fn check(&self, x: [f64; 2]) -> Result<()> {
        let f = self.factor.eval(x);
        if !f.is_finite() {
            return Err(Error::InvalidMetric(format!(
                "conformal factor is not finite at {x:?}"
            )));
        }
        self.base.check(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{V1, V2, X1};
    use std::f64::consts::PI;

    #[test]
    fn general_kz_matches_specialized_formulas() {
        for &eps in &[0.1, 0.3, 0.6] {
            let torus_general = KatokZiller::new(
                SymTensorField::identity(),
                VectorField::constant(1.0, 0.0),
                eps,
                Chart::Torus,
            )
            .unwrap();
            let torus = KzTorus::new(eps).unwrap();
            let sphere_general = KatokZiller::new(
                SymTensorField::round_sphere(),
                VectorField::constant(0.0, 1.0),
                eps,
                Chart::SpherePolar,
            )
            .unwrap();
            let sphere = KzSphere::new(eps).unwrap();
            for k in 0..40 {
                let a = 0.37 * k as f64;
                let v = [a.cos() * 1.3, a.sin() * 0.7];
                let x = [0.1 + 0.07 * k as f64 % 1.0, 0.3];
                assert!((torus_general.value(x, v) - torus.value(x, v)).abs() < 1e-12);
                let xs = [0.05 + 3.0 * (k as f64) / 40.0, 1.1];
                assert!((sphere_general.value(xs, v) - sphere.value(xs, v)).abs() < 1e-12);
            }
        }
        // the sphere formula at the equator, xi = (0, 1): (1 - e) / (1 - e^2) = 1 / (1 + e)
        let s = KzSphere::new(0.3).unwrap();
        assert!((s.value([PI / 2.0, 0.0], [0.0, 1.0]) - 1.0 / 1.3).abs() < 1e-14);
    }

    #[test]
    fn eps_zero_is_riemannian() {
        let g = SymTensorField::round_sphere();
        let kz = KatokZiller::new(
            g.clone(),
            VectorField::constant(0.0, 1.0),
            0.0,
            Chart::SpherePolar,
        )
        .unwrap();
        let r = Riemannian::new(g, Chart::SpherePolar);
        let x = [0.8, 2.0];
        let v = [0.3, -1.1];
        assert!((kz.value(x, v) - r.value(x, v)).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters() {
        assert!(KzTorus::new(1.0).is_err());
        assert!(KzSphere::new(-0.1).is_err());
        let r = Randers::new(
            SymTensorField::identity(),
            CovectorField::constant(0.8, 0.6),
            Chart::Plane,
        )
        .unwrap();
        assert!(matches!(r.check([0.0, 0.0]), Err(Error::InvalidMetric(_))));
    }

    #[test]
    fn homogeneity_of_jets() {
        // Euler relation v . d_vF = F holds exactly for jets
        let m = KzSphere::new(0.5).unwrap();
        let x = [1.0, 0.2];
        let v = [0.4, -0.9];
        let j = m.jet(x, v);
        assert!((j.g[V1] * v[0] + j.g[V2] * v[1] - j.v).abs() < 1e-14);
        // d/dx1 commutes with homogeneity as well
        assert!((j.h[X1][V1] * v[0] + j.h[X1][V2] * v[1] - j.g[X1]).abs() < 1e-13);
    }

    #[test]
    fn custom_metric_uses_finite_differences() {
        let c = Custom::new("euclid", Chart::Plane, |_, v| v[0].hypot(v[1]));
        let j = c.jet([0.0, 0.0], [3.0, 4.0]);
        assert!((j.g[V1] - 0.6).abs() < 1e-9);
        assert!(!c.exact_derivatives());
    }
}
