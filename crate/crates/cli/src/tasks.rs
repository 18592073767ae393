//! Task dispatch: each task turns a resolved config into a result document.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use finlap_core::hilbert::{geodesic_integrate, FiberPoint};
use finlap_core::katok_ziller::{kz_sphere_spectrum, torus_operator, torus_spectrum};
use finlap_core::laplace::operator_coefficients_with;
use finlap_core::measures::{total_volume, volume_density_with};
use finlap_core::metric::{Chart, ChartPoint, MetricRef, MetricRegistry, MetricSpec};
use finlap_core::quadrature::BaseQuadrature;
use finlap_core::spectral::{
    assemble_eigenproblem, solve_eigen, sphere_spectrum, BasisSpec, SpectrumResult,
};
use finlap_core::verify::{SuiteRegistry, VerifyContext};
use finlap_core::{Error, Result};
use serde_json::{json, Value};

use crate::config::{RunConfig, Task};
use crate::output::{Document, Table};

const DEFAULT_FIBER_N: usize = 128;

/// Result of a task before it is stamped and written.
pub struct Outcome {
    pub doc: Document,
    pub table: Option<Table>,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let mut doc = Document::new(cfg.clone());
    let table = match cfg.task.expect("resolved config has a task") {
        Task::Symbol => symbol(cfg, &mut doc)?,
        Task::Volume => volume(cfg, &mut doc)?,
        Task::Spectrum => spectrum(cfg, &mut doc)?,
        Task::Geodesic => geodesic(cfg, &mut doc)?,
        Task::Verify => verify(cfg, &mut doc)?,
    };
    Ok(Outcome { doc, table })
}

fn metric_spec(cfg: &RunConfig) -> Result<&MetricSpec> {
    cfg.metric.as_ref().ok_or_else(|| {
        Error::Config("this task needs a metric (--metric or `metric` in the config)".into())
    })
}

fn required_eps(spec: &MetricSpec) -> Result<f64> {
    spec.eps
        .ok_or_else(|| Error::Config(format!("metric {:?} needs `eps`", spec.kind)))
}

fn build(cfg: &RunConfig) -> Result<MetricRef> {
    MetricRegistry::with_builtins().build(metric_spec(cfg)?)
}

fn base_point(cfg: &RunConfig, chart: Chart) -> ChartPoint {
    let [u, v] = cfg.at.unwrap_or(match chart {
        Chart::SpherePolar => [PI / 2.0, 0.0],
        _ => [0.25, 0.25],
    });
    ChartPoint::on(chart, u, v)
}

fn fiber_n(cfg: &RunConfig) -> usize {
    cfg.resolution.fiber_n.unwrap_or(DEFAULT_FIBER_N)
}

fn set(doc: &mut Document, key: &str, v: Value) {
    doc.coefficients.insert(key.to_string(), v);
}

fn symbol(cfg: &RunConfig, doc: &mut Document) -> Result<Option<Table>> {
    let m = build(cfg)?;
    let x = base_point(cfg, m.chart());
    let c = operator_coefficients_with(m.as_ref(), &x, fiber_n(cfg))?;
    set(doc, "point", json!([x.u, x.v]));
    set(doc, "sigma", json!(c.sigma));
    set(doc, "drift", json!(c.drift));
    set(doc, "vol_density", json!(c.vol_density));
    Ok(None)
}

fn base_quadrature(chart: Chart, n: Option<usize>) -> Result<BaseQuadrature> {
    match chart {
        Chart::Torus => Ok(BaseQuadrature::torus(n.unwrap_or(64))),
        Chart::SpherePolar => {
            let n = n.unwrap_or(48);
            BaseQuadrature::sphere(n, 2 * n)
        }
        Chart::Plane => Err(Error::Config(
            "volume needs a compact chart (torus or sphere)".into(),
        )),
    }
}

fn volume(cfg: &RunConfig, doc: &mut Document) -> Result<Option<Table>> {
    let m = build(cfg)?;
    let quad = base_quadrature(m.chart(), cfg.resolution.grid_n)?;
    let n = fiber_n(cfg);
    let x = base_point(cfg, m.chart());
    set(doc, "volume", json!(total_volume(m.as_ref(), &quad, n)?));
    set(doc, "point", json!([x.u, x.v]));
    set(
        doc,
        "density_at_point",
        json!(volume_density_with(m.as_ref(), &x, n)?),
    );
    set(doc, "base_nodes", json!(quad.len()));
    Ok(None)
}

fn spectrum(cfg: &RunConfig, doc: &mut Document) -> Result<Option<Table>> {
    let spec = metric_spec(cfg)?;
    let res = &cfg.resolution;
    let result = match (spec.kind.as_str(), res.grid_n, spec.conformal.is_none()) {
        ("kz-torus", None, true) => {
            let eps = required_eps(spec)?;
            let (a, b) = torus_operator(eps);
            set(doc, "a", json!(a));
            set(doc, "b", json!(b));
            torus_spectrum(eps, cfg.pmax.unwrap_or(2), cfg.qmax.unwrap_or(2))?
        }
        ("kz-sphere", _, true) => kz_sphere_spectrum(
            required_eps(spec)?,
            res.lmax.unwrap_or(10),
            res.k.unwrap_or(10),
        )?,
        _ => {
            let m = build(cfg)?;
            let k = res.k.unwrap_or(10);
            match m.chart() {
                Chart::Torus => {
                    let p = assemble_eigenproblem(
                        m.as_ref(),
                        &BasisSpec::TorusGrid {
                            n: res.grid_n.unwrap_or(32),
                        },
                    )?;
                    solve_eigen(&p, k)?
                }
                Chart::SpherePolar => {
                    let lmax = res.lmax.unwrap_or(10);
                    sphere_spectrum(lmax, k, &|mm| {
                        assemble_eigenproblem(
                            m.as_ref(),
                            &BasisSpec::SphereHarmonics { lmax, m: mm },
                        )
                    })?
                }
                Chart::Plane => {
                    return Err(Error::Config(
                        "spectrum needs a compact chart (torus or sphere)".into(),
                    ))
                }
            }
        }
    };
    Ok(Some(fill_spectrum(doc, result)))
}

fn fill_spectrum(doc: &mut Document, r: SpectrumResult) -> Table {
    if let Some(l1) = r.first_above(1e-8) {
        set(doc, "first_nonzero", json!(l1));
    }
    let rows = r
        .clusters
        .iter()
        .map(|c| vec![c.value.to_string(), c.multiplicity.to_string()])
        .collect();
    doc.eigenvalues = r.clusters;
    doc.meta.solver = Some(r.meta);
    Table {
        header: vec!["value".into(), "multiplicity".into()],
        rows,
    }
}

fn geodesic(cfg: &RunConfig, doc: &mut Document) -> Result<Option<Table>> {
    let m = build(cfg)?;
    let x = base_point(cfg, m.chart());
    let fp = FiberPoint::new(x, cfg.direction.unwrap_or(0.0));
    let t = geodesic_integrate(
        m.as_ref(),
        &fp,
        cfg.time.unwrap_or(1.0),
        cfg.dt.unwrap_or(1e-3),
    )?;
    let last = t.last();
    set(doc, "status", json!(t.status));
    set(doc, "steps", json!(t.times.len() - 1));
    set(doc, "final", json!([last.base.u, last.base.v, last.phi]));
    let rows = t
        .times
        .iter()
        .zip(&t.points)
        .map(|(s, p)| {
            vec![
                s.to_string(),
                p.base.u.to_string(),
                p.base.v.to_string(),
                p.phi.to_string(),
            ]
        })
        .collect();
    Ok(Some(Table {
        header: ["t", "u", "v", "phi"].map(String::from).to_vec(),
        rows,
    }))
}

fn verify(cfg: &RunConfig, doc: &mut Document) -> Result<Option<Table>> {
    let ctx = VerifyContext {
        spec: cfg.metric.clone(),
        seed: cfg.seed.unwrap_or(0),
        grid_n: cfg.resolution.grid_n,
        lmax: cfg.resolution.lmax,
    };
    let name = cfg.suite.as_deref().unwrap_or("all");
    doc.report = SuiteRegistry::with_builtins().run(name, &ctx)?;
    let passed = doc.report.iter().filter(|c| c.passed()).count();
    let mut summary = BTreeMap::new();
    summary.insert("passed", passed);
    summary.insert("failed", doc.report.len() - passed);
    set(doc, "summary", json!(summary));
    let rows = doc
        .report
        .iter()
        .map(|c| {
            vec![
                c.check.clone(),
                format!("{:?}", c.status).to_lowercase(),
                c.defect.to_string(),
                c.tolerance.to_string(),
            ]
        })
        .collect();
    Ok(Some(Table {
        header: ["check", "status", "defect", "tolerance"]
            .map(String::from)
            .to_vec(),
        rows,
    }))
}
