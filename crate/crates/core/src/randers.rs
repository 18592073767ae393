//! Randers metrics `sqrt(g) + theta` on surfaces: closed-form symbol, its
//! quadrature oracle, and the inverse problem of prescribing symbol and volume.
//!
//! At a point, normal coordinates for `g` are `x_n = T x` with
//!
//! ```text
//! T = [[sqrt g11, g12 / sqrt g11], [0, sqrt|g| / sqrt g11]],   g = T^t T
//! ```
//!
//! In them `theta = |theta| (cos a, -sin a)` defines the angle `a` (the argument
//! of `theta_x - i theta_y`) and, with `b = sqrt(1 - |theta|^2)`,
//!
//! ```text
//! sigma = (1/b) [[1 + r cos 2a, -r sin 2a], [-r sin 2a, 1 - r cos 2a]],  r = (1-b)/(1+b)
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{taylor_jet, CovectorField, FieldRef, ScalarField, SymTensorField, VectorField};
use crate::jet::Jet;
use crate::metric::{validate_point, Chart, ChartPoint, MetricRef, Randers};
use crate::quadrature::BaseQuadrature;

/// Quadrature nodes of [`symbol_oracle`].
pub const ORACLE_NODES: usize = 4096;

/// A Randers metric given by its Riemannian part and its one-form.
#[derive(Clone, Debug)]
pub struct RandersData {
    pub g: SymTensorField,
    pub theta: CovectorField,
    pub chart: Chart,
}

/// Pointwise quantities derived from [`RandersData`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RandersPoint {
    pub g: [[f64; 2]; 2],
    pub theta: [f64; 2],
    /// `theta` in normal coordinates.
    pub theta_normal: [f64; 2],
    pub norm_theta: f64,
    pub b: f64,
    pub varphi: f64,
    /// The normal-coordinate map `T`.
    pub frame: [[f64; 2]; 2],
}

fn normal_frame(g: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = g[0][0] * g[1][1] - g[0][1] * g[0][1];
    let s = g[0][0].sqrt();
    [[s, g[0][1] / s], [0.0, det.sqrt() / s]]
}

/// `T^{-1} S T^{-t}` for upper-triangular `T`.
fn congruence_inv(t: &[[f64; 2]; 2], s: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let ti = [
        [1.0 / t[0][0], -t[0][1] / (t[0][0] * t[1][1])],
        [0.0, 1.0 / t[1][1]],
    ];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    acc += ti[i][k] * s[k][l] * ti[j][l];
                }
            }
            out[i][j] = acc;
        }
    }
    out[0][1] = 0.5 * (out[0][1] + out[1][0]);
    out[1][0] = out[0][1];
    out
}

impl RandersData {
    pub fn new(g: SymTensorField, theta: CovectorField, chart: Chart) -> Self {
        RandersData { g, theta, chart }
    }

    pub fn at(&self, x: &ChartPoint) -> Result<RandersPoint> {
        if x.chart != self.chart {
            return Err(Error::Domain(format!(
                "point on chart {} for Randers data on chart {}",
                x.chart, self.chart
            )));
        }
        x.validate()?;
        let xc = x.coords();
        let g = self.g.eval(xc);
        let theta = self.theta.eval(xc);
        let det = g[0][0] * g[1][1] - g[0][1] * g[0][1];
        if !(g[0][0] > 0.0 && det > 0.0) {
            return Err(Error::InvalidMetric(format!(
                "tensor {g:?} is not positive definite at {xc:?}"
            )));
        }
        let t = normal_frame(&g);
        // theta_chart = theta_n T  =>  theta_n = theta_chart T^{-1}
        let tn0 = theta[0] / t[0][0];
        let tn1 = (theta[1] - tn0 * t[0][1]) / t[1][1];
        let norm = tn0.hypot(tn1);
        if !(norm < 1.0) {
            return Err(Error::InvalidMetric(format!(
                "Randers form has g-norm {norm} >= 1 at {xc:?}"
            )));
        }
        Ok(RandersPoint {
            g,
            theta,
            theta_normal: [tn0, tn1],
            norm_theta: norm,
            b: (1.0 - norm * norm).sqrt(),
            varphi: (-tn1).atan2(tn0),
            frame: t,
        })
    }

    /// The metric `sqrt(g) + theta`; validity is checked where it is evaluated.
    pub fn metric(&self) -> MetricRef {
        Arc::new(
            Randers::new(self.g.clone(), self.theta.clone(), self.chart)
                .expect("Randers construction does not fail"),
        )
    }
}

pub(crate) fn default_samples(chart: Chart) -> Result<Vec<[f64; 2]>> {
    Ok(match chart {
        Chart::Torus => BaseQuadrature::torus(64).points,
        Chart::SpherePolar => BaseQuadrature::sphere(32, 64)?.points,
        Chart::Plane => {
            let n = 64;
            (0..n * n)
                .map(|i| {
                    let (a, b) = ((i % n) as f64, (i / n) as f64);
                    [
                        -1.0 + 2.0 * a / (n - 1) as f64,
                        -1.0 + 2.0 * b / (n - 1) as f64,
                    ]
                })
                .collect()
        }
    })
}

/// Builds `sqrt(g) + theta`, checking `|theta|_g < 1` on a sample of the chart
/// (the unit torus, a Gauss grid on the sphere, `[-1, 1]^2` in the plane).
pub fn make_randers(g: SymTensorField, theta: CovectorField, chart: Chart) -> Result<MetricRef> {
    let data = RandersData::new(g, theta, chart);
    let mut worst: Option<([f64; 2], f64)> = None;
    for p in default_samples(chart)? {
        let n = data
            .at(&ChartPoint::on(chart, p[0], p[1]))
            .map(|rp| rp.norm_theta)
            .or_else(|e| match e {
                Error::InvalidMetric(_) => {
                    let gm = data.g.eval(p);
                    let t = data.theta.eval(p);
                    let det = gm[0][0] * gm[1][1] - gm[0][1] * gm[0][1];
                    if gm[0][0] > 0.0 && det > 0.0 {
                        Ok(crate::metric::conorm_sq(&gm, &t).sqrt())
                    } else {
                        Err(e)
                    }
                }
                other => Err(other),
            })?;
        if worst.map_or(true, |(_, w)| n > w) {
            worst = Some((p, n));
        }
    }
    if let Some((p, n)) = worst {
        if !(n < 1.0) {
            return Err(Error::InvalidMetric(format!(
                "Randers form has g-norm {n} >= 1; worst sample point {p:?}"
            )));
        }
    }
    Ok(data.metric())
}

/// Symbol in normal coordinates from `b` and the angle.
fn normal_symbol(b: f64, varphi: f64) -> [[f64; 2]; 2] {
    let r = (1.0 - b) / (1.0 + b);
    let (s2, c2) = (2.0 * varphi).sin_cos();
    [
        [(1.0 + r * c2) / b, -r * s2 / b],
        [-r * s2 / b, (1.0 - r * c2) / b],
    ]
}

/// Closed-form symbol of `Delta` (upper indices, chart coordinates).
pub fn symbol_closed_form(rd: &RandersData, x: &ChartPoint) -> Result<[[f64; 2]; 2]> {
    let p = rd.at(x)?;
    Ok(congruence_inv(&p.frame, &normal_symbol(p.b, p.varphi)))
}

/// The symbol by trapezoid quadrature of `(1/pi) int e_i e_j / (1 + theta_n . e)`
/// in normal coordinates, transformed back to the chart.
pub fn symbol_oracle(rd: &RandersData, x: &ChartPoint) -> Result<[[f64; 2]; 2]> {
    let p = rd.at(x)?;
    let [a, b] = p.theta_normal;
    let mut s = [0.0; 3];
    let step = 2.0 * PI / ORACLE_NODES as f64;
    for k in 0..ORACLE_NODES {
        let (sn, cs) = (k as f64 * step).sin_cos();
        let d = 1.0 + a * cs + b * sn;
        s[0] += cs * cs / d;
        s[1] += cs * sn / d;
        s[2] += sn * sn / d;
    }
    let c = step / PI;
    let sn = [[s[0] * c, s[1] * c], [s[1] * c, s[2] * c]];
    Ok(congruence_inv(&p.frame, &sn))
}

/// `Omega^{g_sigma} / Omega^F` in closed form, `sqrt(b (1+b)^2 / 4)`.
pub fn volume_ratio(rd: &RandersData, x: &ChartPoint) -> Result<f64> {
    let b = rd.at(x)?.b;
    Ok((b * (1.0 + b) * (1.0 + b) / 4.0).sqrt())
}

/// `Omega^{g_sigma} / Omega^F` from a symbol: `sqrt(det sigma^{-1}) / sqrt(det g)`.
pub fn volume_ratio_from_symbol(sigma: &[[f64; 2]; 2], g: &[[f64; 2]; 2]) -> f64 {
    let ds = sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0];
    let dg = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    (1.0 / ds).sqrt() / dg.sqrt()
}

/// Root of `b (1+b)^2 / 4 = m` on `(0, 1]` by bisection to `1e-12`.
pub fn solve_b(m: f64) -> f64 {
    if m >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid * (1.0 + mid) * (1.0 + mid) / 4.0 < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Where the inverse problem is posed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignDomain {
    Torus,
    /// Rectangle `[u0, u1] x [v0, v1]` of the plane.
    Patch {
        u: [f64; 2],
        v: [f64; 2],
    },
    Sphere,
}

/// Output of [`inverse_design`].
#[derive(Clone, Debug)]
pub struct InverseDesign {
    pub data: RandersData,
    /// `sup mu`, with `mu` the density of `Omega^{g_goal}` against `Omega_goal`;
    /// the designed metric has `Omega^F = K Omega_goal`.
    pub k: f64,
}

const SUP_GRID: usize = 128;

struct DesignCore {
    g_goal: SymTensorField,
    omega: FieldRef,
    z: VectorField,
    k: f64,
}

impl DesignCore {
    fn mu(&self, x: [f64; 2]) -> f64 {
        let g = self.g_goal.eval(x);
        (g[0][0] * g[1][1] - g[0][1] * g[0][1]).sqrt() / self.omega.eval(x)
    }

    /// `(g11, g12, g22, theta1, theta2)` at `x`.
    fn solve(&self, x: [f64; 2]) -> [f64; 5] {
        let gg = self.g_goal.eval(x);
        let mu = (self.mu(x) / self.k).min(1.0);
        let b = solve_b(mu * mu);
        let z = self.z.eval(x);
        let zn = z[0].hypot(z[1]);
        // rotation with first column Z/|Z|
        let p = [[z[0] / zn, -z[1] / zn], [z[1] / zn, z[0] / zn]];
        let mut gy = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                gy[i][j] = (0..2)
                    .flat_map(|k| (0..2).map(move |l| (k, l)))
                    .map(|(k, l)| p[k][i] * gg[k][l] * p[l][j])
                    .sum();
            }
        }
        let (u, v, w) = (gy[0][0], gy[0][1], gy[1][1]);
        let det = (u * w - v * v) / (mu * mu);
        let sq = det.sqrt();
        let q = (1.0 + b) * (1.0 + b);
        let g11 = 4.0 * u / q;
        let g12 = (4.0 * v - (1.0 - b * b) * sq) / q;
        let g22 = (det + g12 * g12) / g11;
        let t = normal_frame(&[[g11, g12], [g12, g22]]);
        let nt = (1.0 - b * b).max(0.0).sqrt() * 0.5f64.sqrt();
        let tn = [nt, -nt];
        let ty = [tn[0] * t[0][0], tn[0] * t[0][1] + tn[1] * t[1][1]];
        let gyy = [[g11, g12], [g12, g22]];
        let mut g = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] = (0..2)
                    .flat_map(|k| (0..2).map(move |l| (k, l)))
                    .map(|(k, l)| p[i][k] * gyy[k][l] * p[j][l])
                    .sum();
            }
        }
        let th = [
            ty[0] * p[0][0] + ty[1] * p[0][1],
            ty[0] * p[1][0] + ty[1] * p[1][1],
        ];
        [g[0][0], 0.5 * (g[0][1] + g[1][0]), g[1][1], th[0], th[1]]
    }
}

struct DesignField {
    core: Arc<DesignCore>,
    which: usize,
}

impl fmt::Debug for DesignField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DesignField({})", self.which)
    }
}

impl ScalarField for DesignField {
    fn eval(&self, x: [f64; 2]) -> f64 {
        self.core.solve(x)[self.which]
    }
    fn eval_jet(&self, x: [Jet; 2]) -> Jet {
        taylor_jet(&|p: [f64; 2]| self.core.solve(p)[self.which], x)
    }
}

fn grid_points(domain: &DesignDomain, n: usize) -> Vec<[f64; 2]> {
    let (u, v) = match domain {
        DesignDomain::Torus => ([0.0, 1.0 - 1.0 / n as f64], [0.0, 1.0 - 1.0 / n as f64]),
        DesignDomain::Patch { u, v } => (*u, *v),
        DesignDomain::Sphere => unreachable!("rejected before sampling"),
    };
    (0..n * n)
        .map(|i| {
            let (a, b) = (
                (i % n) as f64 / (n - 1) as f64,
                (i / n) as f64 / (n - 1) as f64,
            );
            [u[0] + a * (u[1] - u[0]), v[0] + b * (v[1] - v[0])]
        })
        .collect()
}

/// Constructs a Randers metric whose symbol is dual to `g_goal` and whose volume
/// is a constant multiple `K Omega_goal` of the prescribed one.
///
/// `omega_goal` is a density against `du dv`. `z` selects the direction of the
/// one-form where `mu < K`; different choices give different valid solutions.
pub fn inverse_design(
    g_goal: &SymTensorField,
    omega_goal: &FieldRef,
    z: &VectorField,
    domain: DesignDomain,
) -> Result<InverseDesign> {
    let chart = match domain {
        DesignDomain::Torus => Chart::Torus,
        DesignDomain::Patch { u, v } => {
            if !(u[0] < u[1] && v[0] < v[1]) {
                return Err(Error::Domain(format!("empty design patch {u:?} x {v:?}")));
            }
            Chart::Plane
        }
        DesignDomain::Sphere => {
            return Err(Error::Construction(
                "the sphere carries no nowhere-vanishing vector field to orient the one-form"
                    .into(),
            ))
        }
    };
    let mut core = DesignCore {
        g_goal: g_goal.clone(),
        omega: omega_goal.clone(),
        z: z.clone(),
        k: 1.0,
    };
    let pts = grid_points(&domain, SUP_GRID);
    let mut samples = Vec::with_capacity(pts.len());
    for p in &pts {
        let g = g_goal.eval(*p);
        let det = g[0][0] * g[1][1] - g[0][1] * g[0][1];
        if !(g[0][0] > 0.0 && det > 0.0) {
            return Err(Error::InvalidMetric(format!(
                "goal tensor not positive definite at {p:?}"
            )));
        }
        let mu = core.mu(*p);
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::Domain(format!(
                "density ratio mu = {mu} is unbounded or nonpositive at {p:?}"
            )));
        }
        let zv = z.eval(*p);
        if zv[0].hypot(zv[1]) < 1e-12 {
            return Err(Error::Construction(format!(
                "vector field Z vanishes at {p:?}"
            )));
        }
        samples.push((*p, mu));
    }
    // local refinement of the best grid candidates by alternating golden sections
    samples.sort_by(|a, b| b.1.total_cmp(&a.1));
    let h = match domain {
        DesignDomain::Patch { u, v } => {
            ((u[1] - u[0]) / SUP_GRID as f64).max((v[1] - v[0]) / SUP_GRID as f64)
        }
        _ => 1.0 / SUP_GRID as f64,
    };
    let clamp = |p: [f64; 2]| match domain {
        DesignDomain::Patch { u, v } => [p[0].clamp(u[0], u[1]), p[1].clamp(v[0], v[1])],
        _ => p,
    };
    let mut k = samples[0].1;
    for &(start, _) in samples.iter().take(16) {
        let mut x = start;
        for _ in 0..12 {
            let (a, _) = crate::metric::golden_max(
                |s| core.mu(clamp([s, x[1]])),
                x[0] - 2.0 * h,
                x[0] + 2.0 * h,
                1e-12,
            );
            x = clamp([a, x[1]]);
            let (b, _) = crate::metric::golden_max(
                |s| core.mu(clamp([x[0], s])),
                x[1] - 2.0 * h,
                x[1] + 2.0 * h,
                1e-12,
            );
            x = clamp([x[0], b]);
        }
        k = k.max(core.mu(x));
    }
    core.k = k;
    let core = Arc::new(core);
    let field = |which| -> FieldRef {
        Arc::new(DesignField {
            core: core.clone(),
            which,
        })
    };
    Ok(InverseDesign {
        data: RandersData {
            g: SymTensorField {
                g11: field(0),
                g12: field(1),
                g22: field(2),
            },
            theta: CovectorField {
                c: [field(3), field(4)],
            },
            chart,
        },
        k: core.k,
    })
}

/// Round-trip defects of a design at `x`: max entry difference between the
/// symbol and `g_goal^{-1}`, and `|Omega^F - K Omega_goal|`.
pub fn design_defects(
    design: &InverseDesign,
    g_goal: &SymTensorField,
    omega_goal: &FieldRef,
    x: &ChartPoint,
) -> Result<(f64, f64)> {
    let s = symbol_closed_form(&design.data, x)?;
    let g = g_goal.eval(x.coords());
    let det = g[0][0] * g[1][1] - g[0][1] * g[0][1];
    let inv = [
        [g[1][1] / det, -g[0][1] / det],
        [-g[0][1] / det, g[0][0] / det],
    ];
    let mut sym = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            sym = sym.max((s[i][j] - inv[i][j]).abs());
        }
    }
    let metric = design.data.metric();
    validate_point(metric.as_ref(), x)?;
    let vol = crate::measures::volume_density(metric.as_ref(), x)?;
    Ok((sym, (vol - design.k * omega_goal.eval(x.coords())).abs()))
}
