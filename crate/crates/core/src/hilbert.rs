//! Hilbert contact form, canonical volume density and Reeb field (geodesic flow).
//!
//! Fiber points are parametrized by the Euclidean angle `phi` of the direction
//! they represent. At `(x, phi)` the Hilbert form is `A = p1 du + p2 dv` with
//! `p = d_vF(x, e(phi))`, and
//!
//! ```text
//! dA = c du^dv + a1 dphi^du + a2 dphi^dv,   a = d(p)/dphi,  c = d_u p2 - d_v p1
//! A^dA = (p2 a1 - p1 a2) dphi^du^dv
//! ```
//!
//! The Reeb field `X` solves `A(X) = 1`, `i_X dA = 0`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::{V1, V2, X1, X2};
use crate::metric::{validate_point, Chart, ChartPoint, FinslerMetric, POLE_MARGIN};

/// Pivot threshold below which the Reeb system is declared degenerate.
pub const DEGENERATE_PIVOT: f64 = 1e-12;

/// A point of the homogenized tangent bundle: base point plus direction angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberPoint {
    pub base: ChartPoint,
    pub phi: f64,
}

impl FiberPoint {
    pub fn new(base: ChartPoint, phi: f64) -> Self {
        FiberPoint {
            base,
            phi: phi.rem_euclid(2.0 * PI),
        }
    }
}

/// Components of the Reeb field in chart x fiber coordinates `(u, v, phi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReebVector {
    pub xu: f64,
    pub xv: f64,
    pub xphi: f64,
}

impl ReebVector {
    pub fn spatial(&self) -> [f64; 2] {
        [self.xu, self.xv]
    }
    pub fn as_array(&self) -> [f64; 3] {
        [self.xu, self.xv, self.xphi]
    }
}

/// Everything the fiber integrals need at one fiber point.
#[derive(Clone, Copy, Debug)]
pub struct FiberFrame {
    /// Hilbert form components `p = d_vF`.
    pub p: [f64; 2],
    /// `dp/dphi`.
    pub a: [f64; 2],
    /// `d_u p2 - d_v p1`.
    pub c: f64,
    /// Signed density of `A^dA` against `dphi^du^dv`.
    pub signed_density: f64,
    pub reeb: [f64; 3],
    /// `d reeb / d(u, v, phi)`: `dreeb[k][i]` is the derivative of component `i`
    /// in coordinate `k`.
    pub dreeb: [[f64; 3]; 3],
}

impl FiberFrame {
    pub fn density(&self) -> f64 {
        self.signed_density.abs()
    }

    /// `L_X` of the spatial Reeb components, the first-order part of `L_X^2`.
    pub fn lie_derivative_of_velocity(&self) -> [f64; 2] {
        let x = &self.reeb;
        let mut out = [0.0; 2];
        for (i, o) in out.iter_mut().enumerate() {
            *o = x[0] * self.dreeb[0][i] + x[1] * self.dreeb[1][i] + x[2] * self.dreeb[2][i];
        }
        out
    }

    /// `A(X) - 1` and the three components of `i_X dA`, which vanish for the Reeb field.
    pub fn reeb_residuals(&self) -> [f64; 4] {
        let [x1, x2, xp] = self.reeb;
        let [p1, p2] = self.p;
        let [a1, a2] = self.a;
        let c = self.c;
        [
            p1 * x1 + p2 * x2 - 1.0,
            -c * x2 + a1 * xp,
            c * x1 + a2 * xp,
            -a1 * x1 - a2 * x2,
        ]
    }
}

/// Solves a 3x3 system by Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col].abs() <= DEGENERATE_PIVOT * scale {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = ((i + 1)..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    Some(x)
}

fn reeb_matrix(p: [f64; 2], a: [f64; 2], c: f64) -> [[f64; 3]; 3] {
    [
        [p[0], p[1], 0.0],
        [-a[0], -a[1], 0.0],
        [c * a[1], -c * a[0], a[0] * a[0] + a[1] * a[1]],
    ]
}

/// Computes the Hilbert form, its differential and the Reeb field with its
/// first derivatives at `(x, phi)`. No validation of `x`.
pub fn fiber_frame(metric: &dyn FinslerMetric, x: [f64; 2], phi: f64) -> Result<FiberFrame> {
    let (s, co) = phi.sin_cos();
    let e = [co, s];
    let de = [-s, co];
    let j = metric.jet(x, e);
    let vi = [V1, V2];
    let xi = [X1, X2];

    let p = [j.g[V1], j.g[V2]];
    let mut a = [0.0; 2];
    for i in 0..2 {
        a[i] = j.h[vi[i]][V1] * de[0] + j.h[vi[i]][V2] * de[1];
    }
    let c = j.h[V2][X1] - j.h[V1][X2];
    let signed_density = p[1] * a[0] - p[0] * a[1];

    let m = reeb_matrix(p, a, c);
    let reeb = solve3(m, [1.0, 0.0, 0.0]).ok_or_else(|| {
        Error::DegenerateContact(format!(
            "x = {x:?}, phi = {phi} (density {signed_density:e})"
        ))
    })?;

    // derivatives of (p, a, c) in (u, v, phi)
    let mut dp = [[0.0; 2]; 3];
    let mut da = [[0.0; 2]; 3];
    let mut dc = [0.0; 3];
    for k in 0..2 {
        let xk = xi[k];
        for i in 0..2 {
            dp[k][i] = j.h[vi[i]][xk];
            da[k][i] = j.t[vi[i]][V1][xk] * de[0] + j.t[vi[i]][V2][xk] * de[1];
        }
        dc[k] = j.t[V2][X1][xk] - j.t[V1][X2][xk];
    }
    for i in 0..2 {
        dp[2][i] = a[i];
        let mut acc = 0.0;
        for (kk, &vk) in [V1, V2].iter().enumerate() {
            for (ll, &vl) in [V1, V2].iter().enumerate() {
                acc += j.t[vi[i]][vk][vl] * de[kk] * de[ll];
            }
            acc -= j.h[vi[i]][vk] * e[kk];
        }
        da[2][i] = acc;
    }
    dc[2] =
        (j.t[V2][X1][V1] - j.t[V1][X2][V1]) * de[0] + (j.t[V2][X1][V2] - j.t[V1][X2][V2]) * de[1];

    let mut dreeb = [[0.0; 3]; 3];
    for k in 0..3 {
        let dm = [
            [dp[k][0], dp[k][1], 0.0],
            [-da[k][0], -da[k][1], 0.0],
            [
                dc[k] * a[1] + c * da[k][1],
                -dc[k] * a[0] - c * da[k][0],
                2.0 * (a[0] * da[k][0] + a[1] * da[k][1]),
            ],
        ];
        let mut rhs = [0.0; 3];
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = -(dm[i][0] * reeb[0] + dm[i][1] * reeb[1] + dm[i][2] * reeb[2]);
        }
        dreeb[k] = solve3(m, rhs)
            .ok_or_else(|| Error::DegenerateContact(format!("x = {x:?}, phi = {phi}")))?;
    }

    Ok(FiberFrame {
        p,
        a,
        c,
        signed_density,
        reeb,
        dreeb,
    })
}

/// Density of `A^dA` with respect to `dphi^du^dv` at a fiber point.
pub fn hilbert_density(metric: &dyn FinslerMetric, fp: &FiberPoint) -> Result<f64> {
    Ok(hilbert_density_signed(metric, fp)?.abs())
}

/// Signed version of [`hilbert_density`]; the orientation `dphi^du^dv` is the
/// reference. Negative for every built-in metric.
pub fn hilbert_density_signed(metric: &dyn FinslerMetric, fp: &FiberPoint) -> Result<f64> {
    validate_point(metric, &fp.base)?;
    Ok(signed_density_unchecked(metric, fp.base.coords(), fp.phi))
}

pub(crate) fn signed_density_unchecked(metric: &dyn FinslerMetric, x: [f64; 2], phi: f64) -> f64 {
    let (s, co) = phi.sin_cos();
    let e = [co, s];
    let de = [-s, co];
    let j = metric.jet(x, e);
    let p = [j.g[V1], j.g[V2]];
    let a = [
        j.h[V1][V1] * de[0] + j.h[V1][V2] * de[1],
        j.h[V2][V1] * de[0] + j.h[V2][V2] * de[1],
    ];
    p[1] * a[0] - p[0] * a[1]
}

/// The Reeb field of the Hilbert form at a fiber point.
pub fn reeb_field(metric: &dyn FinslerMetric, fp: &FiberPoint) -> Result<ReebVector> {
    validate_point(metric, &fp.base)?;
    let f = fiber_frame(metric, fp.base.coords(), fp.phi)?;
    Ok(ReebVector {
        xu: f.reeb[0],
        xv: f.reeb[1],
        xphi: f.reeb[2],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryStatus {
    Complete,
    /// The curve left the validity region of the chart (sphere poles).
    ChartExit,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<FiberPoint>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn last(&self) -> &FiberPoint {
        self.points
            .last()
            .expect("trajectory holds the initial point")
    }
}

fn inside_chart(chart: Chart, y: &[f64; 3]) -> bool {
    chart != Chart::SpherePolar || (POLE_MARGIN..=PI - POLE_MARGIN).contains(&y[0])
}

/// One classical Runge-Kutta step of the Reeb flow in unwrapped coordinates.
pub(crate) fn rk4_step(metric: &dyn FinslerMetric, y: [f64; 3], dt: f64) -> Result<[f64; 3]> {
    let chart = metric.chart();
    let f = |y: &[f64; 3]| -> Result<[f64; 3]> {
        if !inside_chart(chart, y) {
            return Err(Error::Domain(format!("flow left the chart at {y:?}")));
        }
        Ok(fiber_frame(metric, [y[0], y[1]], y[2])?.reeb)
    };
    let add =
        |y: &[f64; 3], k: &[f64; 3], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];
    let k1 = f(&y)?;
    let k2 = f(&add(&y, &k1, 0.5 * dt))?;
    let k3 = f(&add(&y, &k2, 0.5 * dt))?;
    let k4 = f(&add(&y, &k3, dt))?;
    let mut out = y;
    for i in 0..3 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

/// Flows `(x, phi)` along the Reeb field for time `t` (negative allowed) in
/// `steps` RK4 steps; returns unwrapped coordinates.
pub fn flow(
    metric: &dyn FinslerMetric,
    x: [f64; 2],
    phi: f64,
    t: f64,
    steps: usize,
) -> Result<[f64; 3]> {
    let dt = t / steps.max(1) as f64;
    let mut y = [x[0], x[1], phi];
    for _ in 0..steps.max(1) {
        y = rk4_step(metric, y, dt)?;
    }
    if !inside_chart(metric.chart(), &y) {
        return Err(Error::Domain(format!("flow left the chart at {y:?}")));
    }
    Ok(y)
}

/// Integrates the geodesic flow from `fp` up to `t_end` with step `dt`.
///
/// A trajectory that leaves the chart is truncated and flagged rather than
/// reported as an error.
pub fn geodesic_integrate(
    metric: &dyn FinslerMetric,
    fp: &FiberPoint,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !t_end.is_finite() || t_end < 0.0 {
        return Err(Error::Domain(format!(
            "geodesic integration needs dt > 0 and t_end >= 0 (dt = {dt}, t_end = {t_end})"
        )));
    }
    validate_point(metric, &fp.base)?;
    let chart = metric.chart();
    let mut y = [fp.base.u, fp.base.v, fp.phi];
    let mut traj = Trajectory {
        times: vec![0.0],
        points: vec![*fp],
        status: TrajectoryStatus::Complete,
    };
    let nsteps = (t_end / dt).round() as usize;
    let h = if nsteps > 0 {
        t_end / nsteps as f64
    } else {
        0.0
    };
    for n in 0..nsteps {
        match rk4_step(metric, y, h) {
            Ok(next) if inside_chart(chart, &next) => y = next,
            Ok(_) | Err(Error::Domain(_)) => {
                traj.status = TrajectoryStatus::ChartExit;
                break;
            }
            // the polar chart degenerates before the pole margin is reached
            Err(Error::DegenerateContact(_))
                if chart == Chart::SpherePolar && !(0.01..=PI - 0.01).contains(&y[0]) =>
            {
                traj.status = TrajectoryStatus::ChartExit;
                break;
            }
            Err(e) => return Err(e),
        }
        traj.times.push((n + 1) as f64 * h);
        traj.points
            .push(FiberPoint::new(ChartPoint::on(chart, y[0], y[1]), y[2]));
    }
    Ok(traj)
}
