use std::f64::consts::PI;

use finlap_core::metric::{eval_f, ChartPoint, MetricRegistry, MetricSpec, TangentVector};
use finlap_core::spectral::{assemble_eigenproblem, solve_eigen, BasisSpec};
use finlap_core::verify::{Status, SuiteRegistry, VerifyContext};
use finlap_core::Error;

fn spec(json: &str) -> MetricSpec {
    serde_json::from_str(json).unwrap()
}

#[test]
fn metric_from_json_spec() {
    let reg = MetricRegistry::with_builtins();
    let m = reg.build(&spec(r#"{"kind":"kz-torus","eps":0.6}"#)).unwrap();
    let f = eval_f(m.as_ref(), &ChartPoint::torus(0.3, 0.7), TangentVector::new(1.0, 0.0)).unwrap();
    assert!((f - 0.625).abs() < 1e-12);

    let r = reg.build(&spec(r#"{"kind":"randers","theta":["0.2*sin(2*pi*y)",0.1],"conformal":0.5}"#)).unwrap();
    let x = ChartPoint::torus(0.25, 0.25);
    let f = eval_f(r.as_ref(), &x, TangentVector::new(1.0, 0.0)).unwrap();
    assert!((f - 0.5f64.exp() * 1.2).abs() < 1e-12, "{f}");
}

#[test]
fn bad_specs_are_config_errors() {
    let reg = MetricRegistry::with_builtins();
    assert!(matches!(reg.build(&spec(r#"{"kind":"finsler"}"#)), Err(Error::Config(_))));
    assert!(matches!(reg.build(&spec(r#"{"kind":"kz-sphere"}"#)), Err(Error::Config(_))));
    assert!(matches!(reg.build(&spec(r#"{"kind":"riemannian","g":[1,0]}"#)), Err(Error::Config(_))));
    assert!(serde_json::from_str::<MetricSpec>(r#"{"kind":"riemannian","gg":[1,0,1]}"#).is_err());
    assert!(reg.build(&spec(r#"{"kind":"randers","theta":[1.2,0]}"#)).is_err());
}

#[test]
fn suites_by_name_with_a_metric() {
    let reg = SuiteRegistry::with_builtins();
    let ctx = VerifyContext {
        spec: Some(spec(r#"{"kind":"kz-sphere","eps":0.4}"#)),
        ..Default::default()
    };
    let checks = reg.run("holmes-thompson", &ctx).unwrap();
    assert_eq!(checks.len(), 2);
    assert!(checks.iter().all(|c| c.status == Status::Pass), "{checks:?}");
    let checks = reg.run("sphere-spectrum", &ctx).unwrap();
    assert!(checks.iter().all(|c| c.passed()), "{checks:?}");
}

#[test]
fn flat_torus_spectrum_end_to_end() {
    let m = MetricRegistry::with_builtins().build(&MetricSpec::named("riemannian")).unwrap();
    let p = assemble_eigenproblem(m.as_ref(), &BasisSpec::TorusGrid { n: 20 }).unwrap();
    let r = solve_eigen(&p, 5).unwrap();
    // five-point stencil: 4 n^2 sin^2(pi / n)
    let want = 4.0 * 400.0 * (PI / 20.0).sin().powi(2);
    assert!(r.eigenvalues[0].abs() < 1e-9);
    for v in &r.eigenvalues[1..5] {
        assert!((v - want).abs() < 1e-8 * want, "{v} vs {want}");
    }
    assert_eq!(r.clusters[1].multiplicity, 4);
}
