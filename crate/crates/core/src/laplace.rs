//! The Finsler-Laplace operator: symbol, drift, pointwise application and the
//! discrete symmetry checks.
//!
//! With `V = (Xu, Xv)` the spatial part of the Reeb field and `alpha` the
//! normalized angle form,
//!
//! ```text
//! Delta f = (1/pi) int L_X^2 f alpha = sigma^{ij} d_ij f + Z^i d_i f
//! sigma^{ij} = (1/pi) int V^i V^j alpha,    Z^i = (1/pi) int X(V^i) alpha
//! ```

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::hilbert::{fiber_frame, flow};
use crate::jet::{Jet, X1, X2};
use crate::measures::{fiber_nodes, DEFAULT_FIBER_NODES};
use crate::metric::{validate_point, Chart, ChartPoint, FinslerMetric, POLE_MARGIN};

/// Fiber nodes used when coefficients are assembled on a grid.
pub const GRID_FIBER_NODES: usize = 96;
/// Step of the geodesic evaluation path.
pub const GEODESIC_STEP: f64 = 1e-3;
/// Step used to differentiate `rho sigma` in the divergence-form check.
pub const DIVERGENCE_STEP: f64 = 1e-4;

/// Second-order coefficients, first-order coefficients and volume density of the
/// operator at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatorCoefficients {
    /// Symbol, upper indices.
    pub sigma: [[f64; 2]; 2],
    pub drift: [f64; 2],
    /// Density of `Omega` against `du dv`.
    pub vol_density: f64,
}

impl OperatorCoefficients {
    /// Eigenvalues of the symbol, ascending.
    pub fn sigma_eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, c]] = self.sigma;
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        [mean - rad, mean + rad]
    }

    /// `sigma : D^2 f + Z . grad f`.
    pub fn apply(&self, grad: [f64; 2], hess: [[f64; 2]; 2]) -> f64 {
        let s = &self.sigma;
        s[0][0] * hess[0][0]
            + 2.0 * s[0][1] * hess[0][1]
            + s[1][1] * hess[1][1]
            + self.drift[0] * grad[0]
            + self.drift[1] * grad[1]
    }
}

/// Operator coefficients with the default fiber resolution.
pub fn operator_coefficients(
    metric: &dyn FinslerMetric,
    x: &ChartPoint,
) -> Result<OperatorCoefficients> {
    operator_coefficients_with(metric, x, DEFAULT_FIBER_NODES)
}

/// Operator coefficients with `n` fiber nodes.
pub fn operator_coefficients_with(
    metric: &dyn FinslerMetric,
    x: &ChartPoint,
    n: usize,
) -> Result<OperatorCoefficients> {
    if n < 16 {
        return Err(Error::Domain(format!(
            "fiber quadrature needs at least 16 nodes, got {n}"
        )));
    }
    validate_point(metric, x)?;
    coefficients_unchecked(metric, x.coords(), n)
}

pub(crate) fn coefficients_unchecked(
    metric: &dyn FinslerMetric,
    x: [f64; 2],
    n: usize,
) -> Result<OperatorCoefficients> {
    let (nodes, dphi) = fiber_nodes(metric, x, n);
    let mut total = 0.0;
    let mut ss = [[0.0; 2]; 2];
    let mut zz = [0.0; 2];
    for (phi, d) in nodes.iter().zip(&dphi) {
        let f = fiber_frame(metric, x, *phi)?;
        let w = f.density() * d;
        if !(w > 0.0) {
            return Err(Error::DegenerateContact(format!("x = {x:?}, phi = {phi}")));
        }
        total += w;
        let v = [f.reeb[0], f.reeb[1]];
        let lv = f.lie_derivative_of_velocity();
        for i in 0..2 {
            for j in 0..2 {
                ss[i][j] += w * v[i] * v[j];
            }
            zz[i] += w * lv[i];
        }
    }
    // (1/pi) sum of angle weights 2 pi w / total
    let c = 2.0 / total;
    let off = 0.5 * (ss[0][1] + ss[1][0]) * c;
    Ok(OperatorCoefficients {
        sigma: [[ss[0][0] * c, off], [off, ss[1][1] * c]],
        drift: [zz[0] * c, zz[1] * c],
        vol_density: total / (2.0 * PI),
    })
}

pub(crate) fn field_derivatives(
    f: &dyn ScalarField,
    x: [f64; 2],
) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let (xj, _) = Jet::seed(x, [0.0, 0.0]);
    let j = f.eval_jet(xj);
    (
        j.v,
        [j.g[X1], j.g[X2]],
        [[j.h[X1][X1], j.h[X1][X2]], [j.h[X2][X1], j.h[X2][X2]]],
    )
}

/// `Delta f (x)` by the coefficient path `sigma : D^2 f + Z . grad f`.
pub fn laplacian_apply(
    metric: &dyn FinslerMetric,
    f: &dyn ScalarField,
    x: &ChartPoint,
) -> Result<f64> {
    let c = operator_coefficients(metric, x)?;
    let (_, g, h) = field_derivatives(f, x.coords());
    Ok(c.apply(g, h))
}

/// `Delta f (x)` by the geodesic path: fiber average of second differences of
/// `f` along the geodesics through `x`.
///
/// The second differences at steps `h` and `2h` are Richardson-combined, so the
/// truncation error is `O(h^4)` rather than `O(h^2)`.
pub fn laplacian_apply_geodesic(
    metric: &dyn FinslerMetric,
    f: &dyn ScalarField,
    x: &ChartPoint,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!(
            "geodesic step must be positive, got {h}"
        )));
    }
    validate_point(metric, x)?;
    let xc = x.coords();
    let (nodes, dphi) = fiber_nodes(metric, xc, DEFAULT_FIBER_NODES);
    let f0 = f.eval(xc);
    let mut total = 0.0;
    let mut acc = 0.0;
    for (phi, d) in nodes.iter().zip(&dphi) {
        let w = crate::hilbert::signed_density_unchecked(metric, xc, *phi).abs() * d;
        let diff = |t: f64| -> Result<f64> {
            let fwd = flow(metric, xc, *phi, t, 1)?;
            let bwd = flow(metric, xc, *phi, -t, 1)?;
            Ok((f.eval([fwd[0], fwd[1]]) - 2.0 * f0 + f.eval([bwd[0], bwd[1]])) / (t * t))
        };
        let second = (4.0 * diff(h)? - diff(2.0 * h)?) / 3.0;
        total += w;
        acc += w * second;
    }
    Ok(2.0 * acc / total)
}

/// First-order coefficients forced by `Omega`-symmetry:
/// `Z^i = (1/rho) d_j (rho sigma^{ij})`, with `rho` the volume density.
pub fn divergence_form_drift(
    metric: &dyn FinslerMetric,
    x: &ChartPoint,
    n: usize,
) -> Result<[f64; 2]> {
    validate_point(metric, x)?;
    let xc = x.coords();
    let h = DIVERGENCE_STEP;
    let k = |y: [f64; 2]| -> Result<[[f64; 2]; 2]> {
        let c = coefficients_unchecked(metric, y, n)?;
        Ok([
            [c.vol_density * c.sigma[0][0], c.vol_density * c.sigma[0][1]],
            [c.vol_density * c.sigma[1][0], c.vol_density * c.sigma[1][1]],
        ])
    };
    let rho = coefficients_unchecked(metric, xc, n)?.vol_density;
    let ku = [k([xc[0] + h, xc[1]])?, k([xc[0] - h, xc[1]])?];
    let kv = [k([xc[0], xc[1] + h])?, k([xc[0], xc[1] - h])?];
    let mut z = [0.0; 2];
    for (i, zi) in z.iter_mut().enumerate() {
        let d0 = (ku[0][i][0] - ku[1][i][0]) / (2.0 * h);
        let d1 = (kv[0][i][1] - kv[1][i][1]) / (2.0 * h);
        *zi = (d0 + d1) / rho;
    }
    Ok(z)
}

/// Region on which the discrete operator is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridSpec {
    /// `n x n` periodic grid on the unit torus.
    Torus { n: usize },
    /// Pole-avoiding band of the polar chart, periodic in `theta`.
    SphereBand {
        n_phi: usize,
        n_theta: usize,
        phi_min: f64,
        phi_max: f64,
    },
}

/// Tensor grid with optional periodicity in the first coordinate; always
/// periodic in the second.
#[derive(Clone, Debug)]
pub struct Grid {
    pub chart: Chart,
    pub nu: usize,
    pub nv: usize,
    pub u0: f64,
    pub hu: f64,
    pub hv: f64,
    pub periodic_u: bool,
}

impl Grid {
    pub fn new(spec: &GridSpec, chart: Chart) -> Result<Grid> {
        match *spec {
            GridSpec::Torus { n } => {
                if chart != Chart::Torus {
                    return Err(Error::Config(format!(
                        "a periodic torus grid needs a torus metric, got chart {chart}"
                    )));
                }
                if n < 4 {
                    return Err(Error::Config(format!("torus grid needs n >= 4, got {n}")));
                }
                let h = 1.0 / n as f64;
                Ok(Grid {
                    chart,
                    nu: n,
                    nv: n,
                    u0: 0.0,
                    hu: h,
                    hv: h,
                    periodic_u: true,
                })
            }
            GridSpec::SphereBand {
                n_phi,
                n_theta,
                phi_min,
                phi_max,
            } => {
                if chart != Chart::SpherePolar {
                    return Err(Error::Config(format!(
                        "a sphere band needs a sphere metric, got chart {chart}"
                    )));
                }
                if n_phi < 3
                    || n_theta < 4
                    || !(POLE_MARGIN..PI - POLE_MARGIN).contains(&phi_min)
                    || !(phi_min < phi_max && phi_max <= PI - POLE_MARGIN)
                {
                    return Err(Error::Config(format!(
                        "invalid sphere band: n_phi = {n_phi}, n_theta = {n_theta}, phi in [{phi_min}, {phi_max}]"
                    )));
                }
                Ok(Grid {
                    chart,
                    nu: n_phi,
                    nv: n_theta,
                    u0: phi_min,
                    hu: (phi_max - phi_min) / (n_phi - 1) as f64,
                    hv: 2.0 * PI / n_theta as f64,
                    periodic_u: false,
                })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nu * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of node `(k, l)`; `k` along `u`, `l` along `v`, both wrapped if periodic.
    pub fn idx(&self, k: isize, l: isize) -> Option<usize> {
        let k = if self.periodic_u {
            k.rem_euclid(self.nu as isize)
        } else if k < 0 || k >= self.nu as isize {
            return None;
        } else {
            k
        };
        let l = l.rem_euclid(self.nv as isize);
        Some(l as usize * self.nu + k as usize)
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        let (k, l) = (i % self.nu, i / self.nu);
        [self.u0 + k as f64 * self.hu, l as f64 * self.hv]
    }

    /// Whether the full 9-point stencil of node `i` lies on the grid.
    pub fn is_interior(&self, i: usize) -> bool {
        self.periodic_u || (1..self.nu - 1).contains(&(i % self.nu))
    }

    /// Operator coefficients at every node, in parallel.
    pub fn coefficients(
        &self,
        metric: &dyn FinslerMetric,
        fiber_n: usize,
    ) -> Result<Vec<OperatorCoefficients>> {
        if metric.chart() != self.chart {
            return Err(Error::Config(format!(
                "grid on chart {} given a metric on chart {}",
                self.chart,
                metric.chart()
            )));
        }
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let p = self.point(i);
                metric.check(p)?;
                coefficients_unchecked(metric, p, fiber_n)
            })
            .collect()
    }

    /// Nondivergence discretization `sigma : D^2 u + Z . grad u` with central
    /// differences; rows only for interior nodes.
    pub fn coefficient_stencil(&self, coeffs: &[OperatorCoefficients]) -> CsMat<f64> {
        let n = self.len();
        let mut t = TriMat::with_capacity((n, n), 9 * n);
        let (hu, hv) = (self.hu, self.hv);
        for (i, c) in coeffs.iter().enumerate() {
            if !self.is_interior(i) {
                continue;
            }
            let (k, l) = ((i % self.nu) as isize, (i / self.nu) as isize);
            let s = &c.sigma;
            let mut put = |dk: isize, dl: isize, v: f64| {
                if let Some(j) = self.idx(k + dk, l + dl) {
                    t.add_triplet(i, j, v);
                }
            };
            put(0, 0, -2.0 * s[0][0] / (hu * hu) - 2.0 * s[1][1] / (hv * hv));
            put(1, 0, s[0][0] / (hu * hu) + c.drift[0] / (2.0 * hu));
            put(-1, 0, s[0][0] / (hu * hu) - c.drift[0] / (2.0 * hu));
            put(0, 1, s[1][1] / (hv * hv) + c.drift[1] / (2.0 * hv));
            put(0, -1, s[1][1] / (hv * hv) - c.drift[1] / (2.0 * hv));
            let x = 2.0 * s[0][1] / (4.0 * hu * hv);
            put(1, 1, x);
            put(-1, -1, x);
            put(1, -1, -x);
            put(-1, 1, -x);
        }
        t.to_csr()
    }

    /// Conservative discretization of `d_i (rho sigma^{ij} d_j u)`; the returned
    /// matrix `D` is symmetric and `Delta u ~ D u / rho` at interior nodes.
    pub fn divergence_stencil(&self, coeffs: &[OperatorCoefficients]) -> CsMat<f64> {
        let n = self.len();
        let mut t = TriMat::with_capacity((n, n), 9 * n);
        let (hu, hv) = (self.hu, self.hv);
        let kk = |j: usize, a: usize, b: usize| coeffs[j].vol_density * coeffs[j].sigma[a][b];
        for i in 0..n {
            if !self.is_interior(i) {
                continue;
            }
            let (k, l) = ((i % self.nu) as isize, (i / self.nu) as isize);
            let at = |dk: isize, dl: isize| self.idx(k + dk, l + dl).expect("interior stencil");
            let mut put = |j: usize, v: f64| t.add_triplet(i, j, v);
            // d_u (K11 d_u u) with half-node averages
            let kp = 0.5 * (kk(i, 0, 0) + kk(at(1, 0), 0, 0)) / (hu * hu);
            let km = 0.5 * (kk(i, 0, 0) + kk(at(-1, 0), 0, 0)) / (hu * hu);
            put(at(1, 0), kp);
            put(at(-1, 0), km);
            put(i, -kp - km);
            let kp = 0.5 * (kk(i, 1, 1) + kk(at(0, 1), 1, 1)) / (hv * hv);
            let km = 0.5 * (kk(i, 1, 1) + kk(at(0, -1), 1, 1)) / (hv * hv);
            put(at(0, 1), kp);
            put(at(0, -1), km);
            put(i, -kp - km);
            // d_u (K12 d_v u) + d_v (K12 d_u u)
            let q = 1.0 / (4.0 * hu * hv);
            let a = kk(at(1, 0), 0, 1) * q;
            put(at(1, 1), a);
            put(at(1, -1), -a);
            let a = kk(at(-1, 0), 0, 1) * q;
            put(at(-1, 1), -a);
            put(at(-1, -1), a);
            let a = kk(at(0, 1), 0, 1) * q;
            put(at(1, 1), a);
            put(at(-1, 1), -a);
            let a = kk(at(0, -1), 0, 1) * q;
            put(at(1, -1), -a);
            put(at(-1, -1), a);
        }
        t.to_csr()
    }

    /// Diagonal mass `rho hu hv`.
    pub fn mass(&self, coeffs: &[OperatorCoefficients]) -> Vec<f64> {
        coeffs
            .iter()
            .map(|c| c.vol_density * self.hu * self.hv)
            .collect()
    }
}

pub(crate) fn csr_matvec(a: &CsMat<f64>, x: &[f64], y: &mut [f64]) {
    for (i, row) in a.outer_iterator().enumerate() {
        y[i] = row.iter().map(|(j, v)| v * x[j]).sum();
    }
}

/// Result of [`weighted_symmetry_residual`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SymmetryReport {
    /// `max |(M L)_ij - (M L)_ji| / max |(M L)_ij|` over interior pairs, `L` the
    /// nondivergence discretization.
    pub symmetry_defect: f64,
    /// Relative max difference between the divergence-form discretization and the
    /// exact coefficient-path value on a smooth test function.
    pub divergence_defect: f64,
    /// Max difference between quadrature drift and divergence-form drift,
    /// the latter differentiated on the grid.
    pub drift_defect: f64,
}

/// Discrete `Omega`-symmetry defect of the operator on a grid.
pub fn weighted_symmetry_residual(
    metric: &dyn FinslerMetric,
    region: &GridSpec,
) -> Result<SymmetryReport> {
    let grid = Grid::new(region, metric.chart())?;
    let coeffs = grid.coefficients(metric, GRID_FIBER_NODES)?;
    let mass = grid.mass(&coeffs);

    let l = grid.coefficient_stencil(&coeffs);
    let mut scale = 0.0f64;
    let mut defect = 0.0f64;
    for (i, row) in l.outer_iterator().enumerate() {
        for (j, v) in row.iter() {
            if !grid.is_interior(j) {
                continue;
            }
            let a = mass[i] * v;
            let b = mass[j] * l.get(j, i).copied().unwrap_or(0.0);
            scale = scale.max(a.abs());
            defect = defect.max((a - b).abs());
        }
    }

    // smooth test function in the chart coordinates
    let (kx, ky) = match grid.chart {
        Chart::Torus => (2.0 * PI, 2.0 * PI),
        _ => (1.0, 1.0),
    };
    let u =
        |p: [f64; 2]| (kx * p[0]).sin() + (ky * p[1]).cos() + 0.5 * (kx * p[0] + ky * p[1]).sin();
    let du = |p: [f64; 2]| {
        let c = 0.5 * (kx * p[0] + ky * p[1]).cos();
        [
            kx * (kx * p[0]).cos() + kx * c,
            -ky * (ky * p[1]).sin() + ky * c,
        ]
    };
    let d2u = |p: [f64; 2]| {
        let s = 0.5 * (kx * p[0] + ky * p[1]).sin();
        [
            [-kx * kx * (kx * p[0]).sin() - kx * kx * s, -kx * ky * s],
            [-kx * ky * s, -ky * ky * (ky * p[1]).cos() - ky * ky * s],
        ]
    };
    let uv: Vec<f64> = (0..grid.len()).map(|i| u(grid.point(i))).collect();
    let d = grid.divergence_stencil(&coeffs);
    let mut du_div = vec![0.0; grid.len()];
    csr_matvec(&d, &uv, &mut du_div);
    let mut div_defect = 0.0f64;
    let mut div_scale = 0.0f64;
    for i in (0..grid.len()).filter(|&i| grid.is_interior(i)) {
        let p = grid.point(i);
        let exact = coeffs[i].apply(du(p), d2u(p));
        div_scale = div_scale.max(exact.abs());
        div_defect = div_defect.max((du_div[i] / coeffs[i].vol_density - exact).abs());
    }

    // divergence-form drift on the grid, central differences of rho sigma
    let mut drift_defect = 0.0f64;
    for i in (0..grid.len()).filter(|&i| grid.is_interior(i)) {
        let (k, l) = ((i % grid.nu) as isize, (i / grid.nu) as isize);
        let at = |dk: isize, dl: isize| grid.idx(k + dk, l + dl).expect("interior stencil");
        let kk = |j: usize, a: usize, b: usize| coeffs[j].vol_density * coeffs[j].sigma[a][b];
        for a in 0..2 {
            let z = ((kk(at(1, 0), a, 0) - kk(at(-1, 0), a, 0)) / (2.0 * grid.hu)
                + (kk(at(0, 1), a, 1) - kk(at(0, -1), a, 1)) / (2.0 * grid.hv))
                / coeffs[i].vol_density;
            drift_defect = drift_defect.max((z - coeffs[i].drift[a]).abs());
        }
    }

    Ok(SymmetryReport {
        symmetry_defect: if scale > 0.0 { defect / scale } else { 0.0 },
        divergence_defect: if div_scale > 0.0 {
            div_defect / div_scale
        } else {
            div_defect
        },
        drift_defect,
    })
}
