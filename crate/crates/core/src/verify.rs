//! Named verification suites: each runs a family of invariant checks and
//! reports one line per check with its defect and tolerance.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CovectorField, Expr, FieldRef, ScalarField, SymTensorField};
use crate::katok_ziller::{
    galerkin_eigenvalue, kz_sphere_spectrum, perturbation_eigenvalue, torus_operator,
    torus_spectrum,
};
use crate::laplace::{laplacian_apply, weighted_symmetry_residual, GridSpec};
use crate::legendre::SphericalHarmonic;
use crate::measures::{holmes_thompson_density, total_volume, volume_density};
use crate::metric::{
    direction, double_dual, dual_norm, eval_f, legendre_forward, scale_conformal, Chart,
    ChartPoint, FieldSpec, KzSphere, KzTorus, MetricRef, MetricRegistry, MetricSpec, Riemannian,
    TangentVector,
};
use crate::quadrature::BaseQuadrature;
use crate::randers::{
    design_defects, inverse_design, make_randers, symbol_closed_form, symbol_oracle, DesignDomain,
    RandersData,
};
use crate::spectral::{assemble_eigenproblem, green_identity, solve_eigen, BasisSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

/// One line of a verification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub status: Status,
    pub defect: f64,
    pub tolerance: f64,
}

impl Check {
    /// Passes when `defect <= tolerance`; NaN defects fail.
    pub fn new(check: impl Into<String>, defect: f64, tolerance: f64) -> Self {
        Check {
            check: check.into(),
            status: if defect <= tolerance {
                Status::Pass
            } else {
                Status::Fail
            },
            defect,
            tolerance,
        }
    }

    /// Passes when `lo <= value <= hi`; the defect is the distance to the interval.
    pub fn within(check: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        let d = if value < lo {
            lo - value
        } else if value > hi {
            value - hi
        } else if value.is_nan() {
            f64::NAN
        } else {
            0.0
        };
        let mut c = Check::new(check, d, 0.0);
        c.tolerance = 0.5 * (hi - lo);
        c
    }

    /// Passes when `value >= min`.
    pub fn at_least(check: impl Into<String>, value: f64, min: f64) -> Self {
        let mut c = Check::new(check, min - value, 0.0);
        c.defect = c.defect.max(0.0);
        if value.is_nan() {
            c.defect = f64::NAN;
            c.status = Status::Fail;
        }
        c
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Inputs shared by all suites; a suite ignores what it does not use.
#[derive(Clone, Debug, Default)]
pub struct VerifyContext {
    pub spec: Option<MetricSpec>,
    pub seed: u64,
    pub grid_n: Option<usize>,
    pub lmax: Option<usize>,
}

impl VerifyContext {
    fn metric(&self) -> Result<Option<(String, MetricRef)>> {
        match &self.spec {
            None => Ok(None),
            Some(s) => Ok(Some((
                s.kind.clone(),
                MetricRegistry::with_builtins().build(s)?,
            ))),
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn eps(&self) -> Option<f64> {
        self.spec.as_ref().and_then(|s| s.eps)
    }
}

pub trait VerifySuite: Send + Sync {
    fn summary(&self) -> &'static str;
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>>;
}

/// Verification suites keyed by name.
pub struct SuiteRegistry {
    suites: BTreeMap<String, Box<dyn VerifySuite>>,
}

impl SuiteRegistry {
    pub fn empty() -> Self {
        SuiteRegistry {
            suites: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("metric-core", MetricCoreSuite);
        r.register("legendre", LegendreSuite);
        r.register("holmes-thompson", HolmesThompsonSuite);
        r.register("conformal", ConformalSuite);
        r.register("riemannian", RiemannianSuite);
        r.register("symmetry", SymmetrySuite);
        r.register("randers-symbol", RandersSymbolSuite);
        r.register("inverse-design", InverseDesignSuite);
        r.register("torus-spectrum", TorusSpectrumSuite);
        r.register("sphere-spectrum", SphereSpectrumSuite);
        r.register("perturbation", PerturbationSuite);
        r
    }

    pub fn register<S: VerifySuite + 'static>(&mut self, name: &str, suite: S) {
        self.suites.insert(name.to_string(), Box::new(suite));
    }

    pub fn names(&self) -> impl Iterator<Item = (&str, &'static str)> {
        self.suites.iter().map(|(k, s)| (k.as_str(), s.summary()))
    }

    /// Runs the named suite, or every suite for `"all"`. Check names are
    /// prefixed with the suite name.
    pub fn run(&self, name: &str, ctx: &VerifyContext) -> Result<Vec<Check>> {
        if name == "all" {
            let mut out = Vec::new();
            for n in self.suites.keys() {
                out.extend(self.run(n, ctx)?);
            }
            return Ok(out);
        }
        let suite = self.suites.get(name).ok_or_else(|| {
            let known: Vec<_> = self.suites.keys().cloned().collect();
            Error::Config(format!(
                "unknown suite {name:?}; known: all, {}",
                known.join(", ")
            ))
        })?;
        Ok(suite
            .run(ctx)?
            .into_iter()
            .map(|mut c| {
                c.check = format!("{name}.{}", c.check);
                c
            })
            .collect())
    }
}

impl Default for SuiteRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn expr(s: &str) -> FieldRef {
    Expr::parse(s).expect("built-in expression").into_ref()
}

fn fs(items: &[&str]) -> Option<Vec<FieldSpec>> {
    Some(items.iter().map(|s| FieldSpec::from(*s)).collect())
}

/// Sample metrics covering every built-in kind.
pub fn builtin_samples() -> Vec<(String, MetricRef)> {
    let reg = MetricRegistry::with_builtins();
    let specs = vec![
        MetricSpec {
            g: fs(&["1+0.3*sin(2*pi*x)", "0.1", "1+0.2*cos(2*pi*y)"]),
            ..MetricSpec::named("riemannian")
        },
        MetricSpec::named("round-sphere"),
        MetricSpec {
            theta: fs(&["0.5*sin(2*pi*y)", "0.2"]),
            ..MetricSpec::named("randers")
        },
        MetricSpec::named("kz-torus").with_eps(0.6),
        MetricSpec::named("kz-sphere").with_eps(0.5),
        MetricSpec {
            killing: fs(&["1", "0"]),
            g: fs(&["1", "0", "1+0.2*sin(2*pi*x)"]),
            ..MetricSpec::named("katok-ziller").with_eps(0.4)
        },
        MetricSpec {
            conformal: Some(FieldSpec::from("0.2*sin(2*pi*x)*cos(2*pi*y)")),
            ..MetricSpec::named("kz-torus").with_eps(0.3)
        },
    ];
    specs
        .into_iter()
        .map(|s| {
            let name = if s.conformal.is_some() {
                "conformal".to_string()
            } else {
                s.kind.clone()
            };
            (name, reg.build(&s).expect("built-in metric"))
        })
        .collect()
}

/// Uniform sample point on a chart, away from the poles of the polar chart.
pub fn random_point(chart: Chart, rng: &mut impl Rng) -> ChartPoint {
    match chart {
        Chart::Torus => ChartPoint::torus(rng.gen(), rng.gen()),
        Chart::SpherePolar => {
            ChartPoint::sphere(rng.gen_range(0.1..PI - 0.1), rng.gen_range(0.0..2.0 * PI))
        }
        Chart::Plane => ChartPoint::plane(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
    }
}

fn targets(ctx: &VerifyContext) -> Result<Vec<(String, MetricRef)>> {
    Ok(match ctx.metric()? {
        Some(m) => vec![m],
        None => builtin_samples(),
    })
}

struct MetricCoreSuite;

impl VerifySuite for MetricCoreSuite {
    fn summary(&self) -> &'static str {
        "homogeneity, Euler identity and strong convexity on random samples"
    }
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>> {
        let mut rng = ctx.rng();
        let mut out = Vec::new();
        for (name, m) in targets(ctx)? {
            let (mut hom, mut euler, mut margin) = (0.0f64, 0.0f64, f64::INFINITY);
            for _ in 0..100 {
                let x = random_point(m.chart(), &mut rng);
                let v = TangentVector(direction(rng.gen_range(0.0..2.0 * PI)));
                let lam: f64 = rng.gen_range(0.01..10.0);
                let f = eval_f(m.as_ref(), &x, v)?;
                let fl = eval_f(
                    m.as_ref(),
                    &x,
                    TangentVector::new(lam * v.0[0], lam * v.0[1]),
                )?;
                hom = hom.max((fl - lam * f).abs() / f);
                let d = crate::metric::vertical_derivative_fd(m.as_ref(), &x, v)?;
                euler = euler.max((d.apply(v) - f).abs());
                margin = margin.min(crate::metric::convexity_margin(m.as_ref(), &x, v)?);
            }
            out.push(Check::new(format!("{name}.homogeneity"), hom, 1e-10));
            out.push(Check::new(format!("{name}.euler"), euler, 1e-6));
            out.push(Check::new(
                format!("{name}.convexity"),
                (-margin).max(0.0),
                0.0,
            ));
        }
        Ok(out)
    }
}

struct LegendreSuite;

impl VerifySuite for LegendreSuite {
    fn summary(&self) -> &'static str {
        "F* o L_F = F and F** = F over 500 random samples"
    }
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>> {
        let mut rng = ctx.rng();
        let metrics = targets(ctx)?;
        let (mut rt, mut dd) = (0.0f64, 0.0f64);
        for i in 0..500 {
            let m = &metrics[i % metrics.len()].1;
            let x = random_point(m.chart(), &mut rng);
            let s: f64 = rng.gen_range(0.2..5.0);
            let e = direction(rng.gen_range(0.0..2.0 * PI));
            let v = TangentVector::new(s * e[0], s * e[1]);
            let f = eval_f(m.as_ref(), &x, v)?;
            let l = legendre_forward(m.as_ref(), &x, v)?;
            rt = rt.max((dual_norm(m.as_ref(), &x, l)? - f).abs() / f);
            dd = dd.max((double_dual(m.as_ref(), &x, v)? - f).abs() / f);
        }
        Ok(vec![
            Check::new("round-trip", rt, 1e-6),
            Check::new("double-dual", dd, 1e-6),
        ])
    }
}

struct HolmesThompsonSuite;

impl VerifySuite for HolmesThompsonSuite {
    fn summary(&self) -> &'static str {
        "volume density vs dual-ball area; Randers volume sqrt(det g); Katok-Ziller closed forms"
    }
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>> {
        let mut rng = ctx.rng();
        let metrics = match ctx.metric()? {
            Some(m) => vec![m],
            None => {
                let theta = CovectorField {
                    c: [expr("0.6*cos(2*pi*y)"), expr("0.6*sin(2*pi*y)")],
                };
                let g = SymTensorField::parse("1+0.3*sin(2*pi*x)", "0.1", "1")?;
                vec![
                    (
                        "riemannian".into(),
                        Arc::new(Riemannian::new(g.clone(), Chart::Torus)) as MetricRef,
                    ),
                    ("randers".into(), make_randers(g, theta, Chart::Torus)?),
                    ("kz-torus".into(), Arc::new(KzTorus::new(0.6)?) as MetricRef),
                ]
            }
        };
        let mut out = Vec::new();
        for (name, m) in metrics {
            let mut ht = 0.0f64;
            let mut closed = 0.0f64;
            let mut has_closed = false;
            for _ in 0..100 {
                let x = random_point(m.chart(), &mut rng);
                let rho = volume_density(m.as_ref(), &x)?;
                ht = ht.max((rho - holmes_thompson_density(m.as_ref(), &x)?).abs());
                let spec_eps = ctx.eps();
                let want = match name.as_str() {
                    "randers" | "riemannian" if ctx.spec.is_none() => {
                        let g = [[1.0 + 0.3 * (2.0 * PI * x.u).sin(), 0.1], [0.1, 1.0]];
                        Some((g[0][0] * g[1][1] - g[0][1] * g[1][0]).sqrt())
                    }
                    "kz-torus" => Some((1.0 - spec_eps.unwrap_or(0.6).powi(2)).powf(-1.5)),
                    "kz-sphere" => {
                        let e = (spec_eps.unwrap_or(0.0) * x.u.sin()).powi(2);
                        Some(x.u.sin() / (1.0 - e).powf(1.5))
                    }
                    _ => None,
                };
                if let Some(w) = want {
                    has_closed = true;
                    closed = closed.max((rho - w).abs());
                }
            }
            out.push(Check::new(format!("{name}.dual-ball"), ht, 1e-5));
            if has_closed {
                out.push(Check::new(format!("{name}.closed-form"), closed, 1e-5));
            }
        }
        Ok(out)
    }
}

struct ConformalSuite;

impl VerifySuite for ConformalSuite {
    fn summary(&self) -> &'static str {
        "Delta of e^f F equals e^{-2f} Delta of F at 100 random points"
    }
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>> {
        let (name, base) = match ctx.metric()? {
            Some(m) => m,
            None => ("kz-torus".into(), Arc::new(KzTorus::new(0.3)?) as MetricRef),
        };
        let f = Expr::parse("0.2*sin(2*pi*x)*cos(2*pi*y)")?;
        let u = Expr::parse("cos(2*pi*x)+sin(4*pi*y)")?;
        let scaled = scale_conformal(base.clone(), f.clone().into_ref());
        let mut rng = ctx.rng();
        let mut defect = 0.0f64;
        for _ in 0..100 {
            let x = random_point(base.chart(), &mut rng);
            let a = laplacian_apply(scaled.as_ref(), &u, &x)?;
            let b = laplacian_apply(base.as_ref(), &u, &x)?;
            defect = defect.max((a - (-2.0 * f.eval(x.coords())).exp() * b).abs());
        }
        Ok(vec![Check::new(format!("{name}.scaling"), defect, 1e-5)])
    }
}

struct RiemannianSuite;

impl VerifySuite for RiemannianSuite {
    fn summary(&self) -> &'static str {
        "round sphere: Delta Y_l^m = -l(l+1) Y_l^m for l <= 5 at random points"
    }
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>> {
        let m = Riemannian::new(SymTensorField::round_sphere(), Chart::SpherePolar);
        let mut rng = ctx.rng();
        let pts: Vec<ChartPoint> = (0..100)
            .map(|_| random_point(Chart::SpherePolar, &mut rng))
            .collect();
        let coeffs: Vec<_> = pts
            .iter()
            .map(|x| crate::laplace::operator_coefficients(&m, x))
            .collect::<Result<_>>()?;
        let mut defect = 0.0f64;
        for l in 0..=5usize {
            for mm in -(l as i64)..=l as i64 {
                let y = SphericalHarmonic::new(l, mm);
                for (x, c) in pts.iter().zip(&coeffs) {
                    let (v, g, h) = crate::laplace::field_derivatives(&y, x.coords());
                    defect = defect.max((c.apply(g, h) + (l * (l + 1)) as f64 * v).abs());
                }
            }
        }
        Ok(vec![Check::new("harmonics", defect, 1e-6)])
    }
}

struct SymmetrySuite;

fn variable_randers() -> Result<MetricRef> {
    let theta = CovectorField {
        c: [expr("0.3*sin(2*pi*y)"), expr("0.2*cos(2*pi*x)")],
    };
    let g = SymTensorField {
        g11: expr("1+0.2*cos(2*pi*x)"),
        g12: expr("0.05*sin(2*pi*(x+y))"),
        g22: expr("1"),
    };
    make_randers(g, theta, Chart::Torus)
}

impl VerifySuite for SymmetrySuite {
    fn summary(&self) -> &'static str {
        "discrete Omega-symmetry of the grid operator and the Green identity"
    }
    fn run(&self, _ctx: &VerifyContext) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        let constant: Vec<(&str, MetricRef)> = vec![
            (
                "flat",
                Arc::new(Riemannian::new(SymTensorField::identity(), Chart::Torus)),
            ),
            ("kz-torus", Arc::new(KzTorus::new(0.6)?)),
            (
                "randers-constant",
                make_randers(
                    SymTensorField::identity(),
                    CovectorField::constant(0.3, 0.4),
                    Chart::Torus,
                )?,
            ),
        ];
        for (name, m) in constant {
            let r = weighted_symmetry_residual(m.as_ref(), &GridSpec::Torus { n: 32 })?;
            out.push(Check::new(
                format!("{name}.defect"),
                r.symmetry_defect,
                1e-10,
            ));
        }
        let ns = [16usize, 32, 64];
        let nf = ns.map(|n| n as f64);
        let shear = make_randers(
            SymTensorField::identity(),
            CovectorField::parse("0.3*sin(2*pi*y)", "0")?,
            Chart::Torus,
        )?;
        let mut defects = Vec::new();
        for n in ns {
            defects.push(
                weighted_symmetry_residual(shear.as_ref(), &GridSpec::Torus { n })?.symmetry_defect,
            );
        }
        out.push(Check::new("randers-shear.defect", defects[2], 1e-3));
        out.push(Check::at_least(
            "randers-shear.order",
            log_slope(&nf, &defects),
            1.8,
        ));
        let m = variable_randers()?;
        let mut div = Vec::new();
        for n in ns {
            div.push(
                weighted_symmetry_residual(m.as_ref(), &GridSpec::Torus { n })?.divergence_defect,
            );
        }
        out.push(Check::new("randers-variable.divergence", div[2], 1e-3));
        out.push(Check::within(
            "randers-variable.order",
            log_slope(&nf, &div),
            1.8,
            2.2,
        ));
        let u = Expr::parse("sin(2*pi*x)+0.5*cos(2*pi*(x+y))")?;
        let g = green_identity(m.as_ref(), &u, &BaseQuadrature::torus(64), 64)?;
        out.push(Check::new("green", g.relative_defect, 1e-3));
        Ok(out)
    }
}

/// Least-squares slope of `-log(err)` against `log(n)`.
pub fn log_slope(ns: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| -e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

struct RandersSymbolSuite;

impl VerifySuite for RandersSymbolSuite {
    fn summary(&self) -> &'static str {
        "closed-form Randers symbol vs quadrature oracle; det sigma = 4 / (b (1+b)^2)"
    }
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>> {
        let mut rng = ctx.rng();
        let (mut sym, mut det) = (0.0f64, 0.0f64);
        let x = ChartPoint::plane(0.0, 0.0);
        for _ in 0..200 {
            let r: f64 = 0.95 * rng.gen::<f64>().sqrt();
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            let rd = RandersData::new(
                SymTensorField::identity(),
                CovectorField::constant(r * a.cos(), r * a.sin()),
                Chart::Plane,
            );
            let s = symbol_closed_form(&rd, &x)?;
            let o = symbol_oracle(&rd, &x)?;
            for i in 0..2 {
                for j in 0..2 {
                    sym = sym.max((s[i][j] - o[i][j]).abs());
                }
            }
            let b = (1.0 - r * r).sqrt();
            let d = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            det = det.max((d - 4.0 / (b * (1.0 + b) * (1.0 + b))).abs());
        }
        Ok(vec![
            Check::new("closed-vs-oracle", sym, 1e-8),
            Check::new("determinant", det, 1e-10),
        ])
    }
}

struct InverseDesignSuite;

impl VerifySuite for InverseDesignSuite {
    fn summary(&self) -> &'static str {
        "inverse design round trip on the torus test family"
    }
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>> {
        let id = SymTensorField::identity();
        let zx = CovectorField::constant(1.0, 0.0);
        let family: Vec<(&str, SymTensorField, FieldRef)> = vec![
            ("fixed-point", id.clone(), expr("1")),
            ("constant-multiple", id.clone(), expr("2")),
            ("varying", id.clone(), expr("1+0.2*sin(2*pi*x)")),
            (
                "general-goal",
                SymTensorField::parse("1+0.2*sin(2*pi*y)", "0.1*cos(2*pi*x)", "1.3")?,
                expr("1.1+0.3*cos(2*pi*(x-y))"),
            ),
        ];
        let mut rng = ctx.rng();
        let mut out = Vec::new();
        for (name, g, omega) in family {
            let d = inverse_design(&g, &omega, &zx, DesignDomain::Torus)?;
            let (mut s, mut v) = (0.0f64, 0.0f64);
            for _ in 0..100 {
                let x = random_point(Chart::Torus, &mut rng);
                let (a, b) = design_defects(&d, &g, &omega, &x)?;
                s = s.max(a);
                v = v.max(b);
            }
            out.push(Check::new(format!("{name}.symbol"), s, 1e-6));
            out.push(Check::new(format!("{name}.volume"), v, 1e-6));
        }
        Ok(out)
    }
}

struct TorusSpectrumSuite;

impl VerifySuite for TorusSpectrumSuite {
    fn summary(&self) -> &'static str {
        "finite-difference spectrum of the torus metric vs the closed form, |p|, |q| <= 2"
    }
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>> {
        let eps = ctx.eps().unwrap_or(0.6);
        let n = ctx.grid_n.unwrap_or(64);
        let m = KzTorus::new(eps)?;
        let p = assemble_eigenproblem(&m, &BasisSpec::TorusGrid { n })?;
        let fd = solve_eigen(&p, 29.min(p.dim()))?;
        let exact = torus_spectrum(eps, 2, 2)?;
        let errs = match_spectrum(&exact.eigenvalues, &fd.eigenvalues);
        let worst = errs.iter().fold(0.0f64, |s, e| s.max(*e));
        let (a, b) = torus_operator(eps);
        Ok(vec![
            Check::new(format!("eps={eps}.n={n}.relative"), worst, 0.01),
            Check::new(
                format!("eps={eps}.quadrature-symbol"),
                {
                    let c =
                        crate::laplace::operator_coefficients(&m, &ChartPoint::torus(0.3, 0.6))?;
                    (c.sigma[0][0] - a).abs().max((c.sigma[1][1] - b).abs())
                },
                1e-8,
            ),
        ])
    }
}

/// Relative errors of the order-preserving assignment of sorted `targets` to a
/// subsequence of sorted `computed` with least total relative error. Zero
/// targets use the absolute error. Targets left unmatched report infinity.
pub fn match_spectrum(targets: &[f64], computed: &[f64]) -> Vec<f64> {
    let (nt, nc) = (targets.len(), computed.len());
    let cost = |i: usize, j: usize| (computed[j] - targets[i]).abs() / targets[i].abs().max(1.0);
    // best[i][j]: least total cost of matching the first i targets within the first j values
    let mut best = vec![vec![f64::INFINITY; nc + 1]; nt + 1];
    best[0].iter_mut().for_each(|b| *b = 0.0);
    for i in 1..=nt {
        for j in i..=nc {
            best[i][j] = best[i][j - 1].min(best[i - 1][j - 1] + cost(i - 1, j - 1));
        }
    }
    let mut errs = vec![f64::INFINITY; nt];
    let (mut i, mut j) = (nt, nc);
    while i > 0 && j >= i {
        if j > i && best[i][j] == best[i][j - 1] {
            j -= 1;
        } else {
            errs[i - 1] = cost(i - 1, j - 1);
            i -= 1;
            j -= 1;
        }
    }
    errs
}

struct SphereSpectrumSuite;

impl VerifySuite for SphereSpectrumSuite {
    fn summary(&self) -> &'static str {
        "sphere Galerkin first eigenvalue 2 - 2 eps^2 and the 8 pi / vol identity"
    }
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>> {
        let lmax = ctx.lmax.unwrap_or(10);
        let eps_list = match ctx.eps() {
            Some(e) => vec![e],
            None => vec![0.1, 0.3, 0.5],
        };
        let mut out = Vec::new();
        for eps in eps_list {
            let r = kz_sphere_spectrum(eps, lmax, 4)?;
            let l1 = r.first_above(1e-6).unwrap_or(f64::NAN);
            out.push(Check::new(
                format!("eps={eps}.lambda1"),
                (l1 - (2.0 - 2.0 * eps * eps)).abs(),
                1e-8,
            ));
            let vol = total_volume(&KzSphere::new(eps)?, &BaseQuadrature::sphere(48, 4)?, 256)?;
            out.push(Check::new(
                format!("eps={eps}.eight-pi-over-vol"),
                (2.0 - 2.0 * eps * eps - 8.0 * PI / vol).abs(),
                1e-6,
            ));
        }
        Ok(out)
    }
}

struct PerturbationSuite;

/// Ratio `|lambda_G(2e) - lambda_p(2e)| / |lambda_G(e) - lambda_p(e)|` for the
/// Galerkin eigenvalue continuing `(l, m)`; `None` when both errors vanish.
pub fn perturbation_ratio(
    l: usize,
    m: usize,
    eps: f64,
    lmax: usize,
) -> Result<(Option<f64>, f64, f64)> {
    let err = |e: f64| -> Result<f64> {
        Ok((galerkin_eigenvalue(e, l, m as i64, lmax)? - perturbation_eigenvalue(l, m, e)).abs())
    };
    let (small, large) = (err(eps)?, err(2.0 * eps)?);
    let ratio = if large < 1e-12 && small < 1e-12 {
        None
    } else {
        Some(large / small)
    };
    Ok((ratio, small, large))
}

impl VerifySuite for PerturbationSuite {
    fn summary(&self) -> &'static str {
        "eps^2 expansion of sphere eigenvalues: error ratio between eps = 0.1 and 0.05"
    }
    fn run(&self, ctx: &VerifyContext) -> Result<Vec<Check>> {
        let lmax = ctx.lmax.unwrap_or(12);
        let mut out = Vec::new();
        for l in 1..=4usize {
            for m in 0..=l {
                let (ratio, small, _) = perturbation_ratio(l, m, 0.05, lmax)?;
                match ratio {
                    None => out.push(Check::new(format!("l={l}.m={m}.exact"), small, 1e-12)),
                    Some(r) => out.push(Check::within(
                        format!("l={l}.m={m}.ratio"),
                        r,
                        16.0 * 0.7,
                        16.0 * 1.3,
                    )),
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lists_and_rejects() {
        let r = SuiteRegistry::with_builtins();
        assert!(r.names().count() >= 10);
        assert!(matches!(
            r.run("nope", &VerifyContext::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn within_and_new() {
        assert!(Check::within("x", 15.0, 11.2, 20.8).passed());
        assert!(!Check::within("x", 4.0, 11.2, 20.8).passed());
        assert!(!Check::new("x", f64::NAN, 1.0).passed());
    }

    #[test]
    fn fast_suites_pass() {
        let r = SuiteRegistry::with_builtins();
        for name in ["randers-symbol", "conformal", "metric-core"] {
            let checks = r.run(name, &VerifyContext::default()).unwrap();
            for c in &checks {
                assert!(c.passed(), "{c:?}");
                assert!(c.check.starts_with(name));
            }
        }
    }

    #[test]
    fn match_spectrum_keeps_order() {
        let e = match_spectrum(&[0.0, 1.0, 1.0, 2.0], &[1e-12, 0.99, 1.02, 1.9, 2.01]);
        assert!(e[0] < 1e-11 && (e[1] - 0.01).abs() < 1e-12 && (e[2] - 0.02).abs() < 1e-12);
        assert!((e[3] - 0.005).abs() < 1e-12);
        // nearest-first would give 3.8 to the first target and leave 3.6 for 4.0
        let e = match_spectrum(&[3.8, 4.0], &[3.6, 3.8]);
        assert!((e[0] - 0.2 / 3.8).abs() < 1e-12 && (e[1] - 0.05).abs() < 1e-12);
        assert!(match_spectrum(&[1.0, 2.0], &[1.0])[1].is_infinite());
    }

    #[test]
    fn log_slope_of_power_law() {
        let ns = [16.0, 32.0, 64.0];
        let errs: Vec<f64> = ns.iter().map(|n: &f64| 3.0 * n.powi(-2)).collect();
        assert!((log_slope(&ns, &errs) - 2.0).abs() < 1e-12);
    }
}
