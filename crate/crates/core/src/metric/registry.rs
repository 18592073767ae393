//! Name-keyed registry of metric constructors.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Chart, Conformal, KatokZiller, KzSphere, KzTorus, MetricRef, Riemannian};
use crate::error::{Error, Result};
use crate::field::{CovectorField, Expr, FieldRef, SymTensorField};

/// Either a number or an expression in the chart coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Number(f64),
    Text(String),
}

impl FieldSpec {
    pub fn to_field(&self) -> Result<FieldRef> {
        Ok(match self {
            FieldSpec::Number(c) => Expr::constant(*c).into_ref(),
            FieldSpec::Text(s) => Expr::parse(s)?.into_ref(),
        })
    }
}

impl From<f64> for FieldSpec {
    fn from(c: f64) -> Self {
        FieldSpec::Number(c)
    }
}

impl From<&str> for FieldSpec {
    fn from(s: &str) -> Self {
        FieldSpec::Text(s.to_string())
    }
}

/// Declarative description of a metric, as read from a config file or flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<Chart>,
    /// `[g11, g12, g22]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<FieldSpec>>,
    /// `[theta_1, theta_2]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<FieldSpec>>,
    /// Killing field `[V_1, V_2]` for the general Katok-Ziller construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killing: Option<Vec<FieldSpec>>,
    /// Conformal factor `f`, the metric becomes `e^f F`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conformal: Option<FieldSpec>,
}

impl MetricSpec {
    pub fn named(kind: &str) -> Self {
        MetricSpec {
            kind: kind.to_string(),
            ..Default::default()
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    fn eps(&self) -> Result<f64> {
        self.eps
            .ok_or_else(|| Error::Config(format!("metric {:?} needs `eps`", self.kind)))
    }

    fn tensor(&self, default_chart: Chart) -> Result<SymTensorField> {
        match &self.g {
            None if default_chart == Chart::SpherePolar => Ok(SymTensorField::round_sphere()),
            None => Ok(SymTensorField::identity()),
            Some(g) if g.len() == 3 => Ok(SymTensorField {
                g11: g[0].to_field()?,
                g12: g[1].to_field()?,
                g22: g[2].to_field()?,
            }),
            Some(g) => Err(Error::Config(format!(
                "`g` needs 3 components [g11, g12, g22], got {}",
                g.len()
            ))),
        }
    }

    fn covector(field: &Option<Vec<FieldSpec>>, name: &str) -> Result<Option<CovectorField>> {
        match field {
            None => Ok(None),
            Some(t) if t.len() == 2 => Ok(Some(CovectorField {
                c: [t[0].to_field()?, t[1].to_field()?],
            })),
            Some(t) => Err(Error::Config(format!(
                "`{name}` needs 2 components, got {}",
                t.len()
            ))),
        }
    }
}

/// Builds a metric from a spec.
pub trait MetricFactory: Send + Sync {
    fn build(&self, spec: &MetricSpec) -> Result<MetricRef>;
    fn summary(&self) -> &'static str;
}

struct RiemannianFactory;
struct RandersFactory;
struct KzTorusFactory;
struct KzSphereFactory;
struct KatokZillerFactory;
struct RoundSphereFactory;

impl MetricFactory for RiemannianFactory {
    fn build(&self, spec: &MetricSpec) -> Result<MetricRef> {
        let chart = spec.chart.unwrap_or(Chart::Torus);
        Ok(Arc::new(Riemannian::new(spec.tensor(chart)?, chart)))
    }
    fn summary(&self) -> &'static str {
        "sqrt(g(v,v)); keys: g, chart (default torus, identity g)"
    }
}

impl MetricFactory for RoundSphereFactory {
    fn build(&self, _spec: &MetricSpec) -> Result<MetricRef> {
        Ok(Arc::new(Riemannian::new(
            SymTensorField::round_sphere(),
            Chart::SpherePolar,
        )))
    }
    fn summary(&self) -> &'static str {
        "round unit sphere in polar coordinates"
    }
}

impl MetricFactory for RandersFactory {
    fn build(&self, spec: &MetricSpec) -> Result<MetricRef> {
        let chart = spec.chart.unwrap_or(Chart::Torus);
        let theta = MetricSpec::covector(&spec.theta, "theta")?.unwrap_or_else(CovectorField::zero);
        crate::randers::make_randers(spec.tensor(chart)?, theta, chart)
    }
    fn summary(&self) -> &'static str {
        "sqrt(g(v,v)) + theta(v); keys: g, theta, chart (default torus)"
    }
}

impl MetricFactory for KzTorusFactory {
    fn build(&self, spec: &MetricSpec) -> Result<MetricRef> {
        Ok(Arc::new(KzTorus::new(spec.eps()?)?))
    }
    fn summary(&self) -> &'static str {
        "Katok-Ziller metric on the flat torus, Killing field d/dx; keys: eps"
    }
}

impl MetricFactory for KzSphereFactory {
    fn build(&self, spec: &MetricSpec) -> Result<MetricRef> {
        Ok(Arc::new(KzSphere::new(spec.eps()?)?))
    }
    fn summary(&self) -> &'static str {
        "Katok-Ziller metric on the round sphere, rotation field; keys: eps"
    }
}

impl MetricFactory for KatokZillerFactory {
    fn build(&self, spec: &MetricSpec) -> Result<MetricRef> {
        let chart = spec.chart.unwrap_or(Chart::Torus);
        let killing = MetricSpec::covector(&spec.killing, "killing")?
            .ok_or_else(|| Error::Config("katok-ziller needs `killing`".into()))?;
        Ok(Arc::new(KatokZiller::new(
            spec.tensor(chart)?,
            killing,
            spec.eps()?,
            chart,
        )?))
    }
    fn summary(&self) -> &'static str {
        "general Katok-Ziller deformation; keys: g, killing, eps, chart"
    }
}

/// Metric constructors keyed by name.
pub struct MetricRegistry {
    factories: BTreeMap<String, Box<dyn MetricFactory>>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        MetricRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("riemannian", RiemannianFactory);
        r.register("round-sphere", RoundSphereFactory);
        r.register("randers", RandersFactory);
        r.register("kz-torus", KzTorusFactory);
        r.register("kz-sphere", KzSphereFactory);
        r.register("katok-ziller", KatokZillerFactory);
        r
    }

    pub fn register<F: MetricFactory + 'static>(&mut self, name: &str, factory: F) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = (&str, &'static str)> {
        self.factories
            .iter()
            .map(|(k, f)| (k.as_str(), f.summary()))
    }

    /// Builds the metric named by `spec.kind`, applying the conformal factor if any.
    pub fn build(&self, spec: &MetricSpec) -> Result<MetricRef> {
        let factory = self.factories.get(&spec.kind).ok_or_else(|| {
            let known: Vec<_> = self.factories.keys().cloned().collect();
            Error::Config(format!(
                "unknown metric kind {:?}; known: {}",
                spec.kind,
                known.join(", ")
            ))
        })?;
        let base = factory.build(spec)?;
        match &spec.conformal {
            None => Ok(base),
            Some(f) => Ok(Arc::new(Conformal::new(base, f.to_field()?))),
        }
    }
}

impl Default for MetricRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_every_builtin() {
        let reg = MetricRegistry::with_builtins();
        let spec = MetricSpec::named("kz-torus").with_eps(0.6);
        let m = reg.build(&spec).unwrap();
        assert!((m.value([0.0, 0.0], [1.0, 0.0]) - 0.625).abs() < 1e-14);

        let spec = MetricSpec {
            kind: "randers".into(),
            theta: Some(vec!["0.3*sin(2*pi*y)".into(), 0.0.into()]),
            ..Default::default()
        };
        let m = reg.build(&spec).unwrap();
        assert!((m.value([0.0, 0.25], [1.0, 0.0]) - 1.3).abs() < 1e-14);

        let spec = MetricSpec {
            kind: "katok-ziller".into(),
            eps: Some(0.3),
            chart: Some(Chart::SpherePolar),
            killing: Some(vec![0.0.into(), 1.0.into()]),
            ..Default::default()
        };
        let m = reg.build(&spec).unwrap();
        let s = KzSphere::new(0.3).unwrap();
        use crate::metric::FinslerMetric;
        assert!((m.value([1.0, 0.0], [0.2, 0.5]) - s.value([1.0, 0.0], [0.2, 0.5])).abs() < 1e-14);
        assert_eq!(reg.names().count(), 6);
    }

    #[test]
    fn unknown_kind_and_missing_keys_are_config_errors() {
        let reg = MetricRegistry::with_builtins();
        assert!(matches!(
            reg.build(&MetricSpec::named("bryant")),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            reg.build(&MetricSpec::named("kz-sphere")),
            Err(Error::Config(_))
        ));
        let spec = MetricSpec {
            kind: "riemannian".into(),
            g: Some(vec![1.0.into()]),
            ..Default::default()
        };
        assert!(matches!(reg.build(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn conformal_factor_applies() {
        let reg = MetricRegistry::with_builtins();
        let mut spec = MetricSpec::named("kz-torus").with_eps(0.0);
        spec.conformal = Some(FieldSpec::Number(2f64.ln()));
        let m = reg.build(&spec).unwrap();
        assert!((m.value([0.3, 0.3], [0.0, 1.0]) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spec_deserializes_from_json() {
        let spec: MetricSpec = serde_json::from_str(
            r#"{"kind":"randers","g":[1,0,"1+0.1*cos(2*pi*x)"],"theta":[0.2,"0.1*sin(2*pi*y)"]}"#,
        )
        .unwrap();
        assert_eq!(spec.kind, "randers");
        assert_eq!(spec.g.as_ref().unwrap().len(), 3);
    }
}
