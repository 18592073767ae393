//! Energy, Rayleigh quotients and discrete eigenproblems for `-Delta`.
//!
//! Torus problems use the conservative 9-point stencil of `div(rho sigma grad)`
//! with the diagonal `Omega` mass; sphere problems are Galerkin projections onto the
//! harmonics of a fixed order `m`. Small problems go to the dense Jacobi solver,
//! large sparse ones to LOBPCG with an FFT preconditioner.

pub mod dense;
pub mod lobpcg;
pub mod precond;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sprs::CsMat;

pub use dense::{generalized_eigen, DenseMatrix, JACOBI_TOL};
pub use lobpcg::{lobpcg, LobpcgOptions, LobpcgOutput};
pub use precond::{FftPreconditioner, TorusSymbol};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::laplace::{
    coefficients_unchecked, csr_matvec, field_derivatives, Grid, GridSpec, GRID_FIBER_NODES,
};
use crate::legendre::legendre_with_derivatives;
use crate::measures::fiber_quadrature;
use crate::metric::{direction, Chart, ChartPoint, FinslerMetric};
use crate::quadrature::{gauss_legendre, BaseQuadrature};

/// Eigenvalues closer than this (relative to `max(1, |lambda|)`) are merged.
pub const MULTIPLICITY_TOL: f64 = 1e-9;
/// Largest dimension sent to the dense solver by [`solve_eigen`].
pub const DENSE_LIMIT: usize = 400;

/// Discretization basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisSpec {
    /// Periodic `n x n` grid on the unit torus.
    TorusGrid { n: usize },
    /// Harmonics `Y_l^m`, `|m| <= l <= lmax`, at one order `m`.
    SphereHarmonics { lmax: usize, m: i64 },
}

impl BasisSpec {
    pub fn describe(&self) -> String {
        match self {
            BasisSpec::TorusGrid { n } => format!("torus-grid({n}x{n})"),
            BasisSpec::SphereHarmonics { lmax, m } => {
                format!("sphere-harmonics(lmax={lmax}, m={m})")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Stiffness {
    Dense(DenseMatrix),
    Sparse(CsMat<f64>),
}

#[derive(Clone, Debug)]
pub enum Mass {
    Diagonal(Vec<f64>),
    Dense(DenseMatrix),
}

/// Generalized problem `-stiffness x = lambda mass x`.
///
/// `stiffness` discretizes `<v, Delta u>_Omega` and is negative semidefinite.
#[derive(Clone, Debug)]
pub struct SpectralProblem {
    pub basis: BasisSpec,
    pub stiffness: Stiffness,
    pub mass: Mass,
    pub metric_tag: String,
    /// `max |S - S^T| / max |S|` before symmetrization.
    pub symmetry_defect: f64,
    /// Constant-coefficient model for preconditioning torus problems.
    pub model: Option<TorusSymbol>,
}

impl SpectralProblem {
    pub fn dim(&self) -> usize {
        match &self.mass {
            Mass::Diagonal(d) => d.len(),
            Mass::Dense(m) => m.dim(),
        }
    }

    /// `<x, -stiffness x>` and `<x, mass x>`.
    pub fn quadratic_forms(&self, x: &[f64]) -> (f64, f64) {
        let sx = match &self.stiffness {
            Stiffness::Dense(s) => s.matvec(x),
            Stiffness::Sparse(s) => {
                let mut y = vec![0.0; x.len()];
                csr_matvec(s, x, &mut y);
                y
            }
        };
        let mx = match &self.mass {
            Mass::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            Mass::Dense(m) => m.matvec(x),
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        (-dot(x, &sx), dot(x, &mx))
    }
}

/// Distinct eigenvalue with its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub value: f64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub basis: String,
    pub metric: String,
    pub solver: String,
    pub dimension: usize,
    pub tolerance: f64,
    pub iterations: usize,
    pub symmetry_defect: f64,
}

/// Sorted eigenvalues of `-Delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Ascending, repeated according to multiplicity.
    pub eigenvalues: Vec<f64>,
    pub clusters: Vec<Cluster>,
    pub meta: SolverMeta,
}

impl SpectrumResult {
    pub fn new(mut eigenvalues: Vec<f64>, meta: SolverMeta) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        let clusters = cluster(&eigenvalues, MULTIPLICITY_TOL);
        SpectrumResult {
            eigenvalues,
            clusters,
            meta,
        }
    }

    /// Smallest eigenvalue above `floor`.
    pub fn first_above(&self, floor: f64) -> Option<f64> {
        self.eigenvalues.iter().copied().find(|v| *v > floor)
    }
}

/// Groups sorted values whose consecutive gaps are within `tol * max(1, |v|)`.
pub fn cluster(sorted: &[f64], tol: f64) -> Vec<Cluster> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut last = f64::NAN;
    for &v in sorted {
        match out.last_mut() {
            Some((sum, count)) if (v - last).abs() <= tol * v.abs().max(1.0) => {
                *sum += v;
                *count += 1;
            }
            _ => out.push((v, 1)),
        }
        last = v;
    }
    out.into_iter()
        .map(|(s, c)| Cluster {
            value: s / c as f64,
            multiplicity: c,
        })
        .collect()
}

/// Operator coefficients along a meridian of a rotation-invariant metric:
/// `Delta = c_phi2 d_phi^2 + c_phi d_phi + c_theta2 d_theta^2`, `Omega = density dphi dtheta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialProfile {
    pub c_phi2: f64,
    pub c_phi: f64,
    pub c_theta2: f64,
    pub density: f64,
}

/// Gauss-Legendre order used for sphere Galerkin matrices.
pub fn default_galerkin_order(lmax: usize) -> usize {
    2 * lmax + 24
}

/// Galerkin matrices `A_kl = <Y_k, Delta Y_l>_Omega`, `M_kl = <Y_k, Y_l>_Omega` at order `m`.
pub fn galerkin_problem(
    lmax: usize,
    m: i64,
    order: usize,
    profile: &(dyn Fn(f64) -> Result<RadialProfile> + Sync),
    metric_tag: String,
) -> Result<SpectralProblem> {
    let am = m.unsigned_abs() as usize;
    if lmax < 4 || am > lmax {
        return Err(Error::Config(format!(
            "sphere basis needs lmax >= 4 and |m| <= lmax, got lmax = {lmax}, m = {m}"
        )));
    }
    let dim = lmax - am + 1;
    let (t, w) = gauss_legendre(order)?;
    let rows: Vec<(DenseMatrix, DenseMatrix)> = t
        .par_iter()
        .zip(&w)
        .map(|(ti, wi)| {
            let phi = ti.acos();
            let c = profile(phi)?;
            let p = legendre_with_derivatives(lmax, am, phi);
            // d(cos phi) = sin(phi) dphi
            let wt = 2.0 * PI * wi * c.density / phi.sin();
            let lp: Vec<f64> = p
                .iter()
                .map(|[f, df, d2f]| {
                    c.c_phi2 * d2f + c.c_phi * df - (am * am) as f64 * c.c_theta2 * f
                })
                .collect();
            Ok((
                DenseMatrix::from_fn(dim, |k, l| wt * p[k][0] * lp[l]),
                DenseMatrix::from_fn(dim, |k, l| wt * p[k][0] * p[l][0]),
            ))
        })
        .collect::<Result<_>>()?;
    let mut a = DenseMatrix::zeros(dim);
    let mut mm = DenseMatrix::zeros(dim);
    for (ra, rm) in &rows {
        for k in 0..dim {
            for l in 0..dim {
                a[(k, l)] += ra[(k, l)];
                mm[(k, l)] += rm[(k, l)];
            }
        }
    }
    let defect = a.asymmetry() / a.max_abs().max(f64::MIN_POSITIVE);
    Ok(SpectralProblem {
        basis: BasisSpec::SphereHarmonics { lmax, m },
        stiffness: Stiffness::Dense(a.symmetrized()),
        mass: Mass::Dense(mm.symmetrized()),
        metric_tag,
        symmetry_defect: defect,
        model: None,
    })
}

/// Radial profile of a rotation-invariant metric on the polar chart from the
/// quadrature coefficients; mixed terms must vanish.
pub fn metric_profile(metric: &dyn FinslerMetric, phi: f64) -> Result<RadialProfile> {
    let c = coefficients_unchecked(metric, [phi, 0.0], GRID_FIBER_NODES)?;
    let probe = coefficients_unchecked(metric, [phi, 1.3], GRID_FIBER_NODES)?;
    let scale = c.sigma[0][0].abs() + c.sigma[1][1].abs() + c.drift[0].abs();
    let tol = 1e-8 * scale.max(1.0);
    let mixed = c.sigma[0][1].abs().max(c.drift[1].abs());
    let varying = (c.sigma[0][0] - probe.sigma[0][0])
        .abs()
        .max((c.sigma[1][1] - probe.sigma[1][1]).abs())
        .max((c.vol_density - probe.vol_density).abs());
    if mixed > tol || varying > tol {
        return Err(Error::Config(format!(
            "sphere Galerkin needs a rotation-invariant metric without mixed terms ({})",
            metric.describe()
        )));
    }
    Ok(RadialProfile {
        c_phi2: c.sigma[0][0],
        c_phi: c.drift[0],
        c_theta2: c.sigma[1][1],
        density: c.vol_density,
    })
}

/// Discretizes `-Delta` of `metric` in the given basis.
pub fn assemble_eigenproblem(
    metric: &dyn FinslerMetric,
    basis: &BasisSpec,
) -> Result<SpectralProblem> {
    match *basis {
        BasisSpec::TorusGrid { n } => {
            if n < 16 {
                return Err(Error::Config(format!("torus grid needs n >= 16, got {n}")));
            }
            let grid = Grid::new(&GridSpec::Torus { n }, metric.chart())?;
            let coeffs = grid.coefficients(metric, GRID_FIBER_NODES)?;
            let mass = grid.mass(&coeffs);
            let l = grid.coefficient_stencil(&coeffs);
            let ml = weighted_rows(&l, &mass);
            let mlt: CsMat<f64> = ml.transpose_view().to_csr();
            let diff = &ml - &mlt;
            let scale = ml.data().iter().fold(0.0f64, |s, v| s.max(v.abs()));
            let defect = diff.data().iter().fold(0.0f64, |s, v| s.max(v.abs())) / scale;
            // the conservative form keeps constants in the kernel exactly; it agrees
            // with the symmetrized nondivergence stencil when the coefficients are constant
            let cell = grid.hu * grid.hv;
            let sym = grid.divergence_stencil(&coeffs).map(|v| v * cell);
            let cnt = coeffs.len() as f64;
            let mut sigma = [[0.0; 2]; 2];
            for c in &coeffs {
                for i in 0..2 {
                    for j in 0..2 {
                        sigma[i][j] += c.sigma[i][j] / cnt;
                    }
                }
            }
            Ok(SpectralProblem {
                basis: *basis,
                stiffness: Stiffness::Sparse(sym),
                mass: Mass::Diagonal(mass),
                metric_tag: metric.describe(),
                symmetry_defect: defect,
                model: Some(TorusSymbol { n, sigma }),
            })
        }
        BasisSpec::SphereHarmonics { lmax, m } => {
            if metric.chart() != Chart::SpherePolar {
                return Err(Error::Config(format!(
                    "sphere harmonics need a metric on the polar chart, got {}",
                    metric.chart()
                )));
            }
            galerkin_problem(
                lmax,
                m,
                default_galerkin_order(lmax),
                &|phi| metric_profile(metric, phi),
                metric.describe(),
            )
        }
    }
}

fn weighted_rows(a: &CsMat<f64>, w: &[f64]) -> CsMat<f64> {
    let mut out = a.clone();
    for (i, mut row) in out.outer_iterator_mut().enumerate() {
        for (_, v) in row.iter_mut() {
            *v *= w[i];
        }
    }
    out
}

/// Lowest `k` eigenvalues of `-stiffness` relative to `mass`.
pub fn solve_eigen(problem: &SpectralProblem, k: usize) -> Result<SpectrumResult> {
    solve_eigen_with(problem, k, SolveOptions::default())
}

/// Which solver handles sparse problems.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SolverKind {
    /// Dense up to [`DENSE_LIMIT`], LOBPCG above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SolveOptions {
    pub kind: SolverKind,
    pub lobpcg: LobpcgOptions,
}

pub fn solve_eigen_with(
    problem: &SpectralProblem,
    k: usize,
    options: SolveOptions,
) -> Result<SpectrumResult> {
    let opts = options.lobpcg;
    let use_dense = match options.kind {
        SolverKind::Auto => problem.dim() <= DENSE_LIMIT,
        SolverKind::Dense => true,
        SolverKind::Iterative => false,
    };
    let dim = problem.dim();
    if k == 0 || k > dim {
        return Err(Error::Config(format!("k = {k} outside 1..={dim}")));
    }
    let mut meta = SolverMeta {
        basis: problem.basis.describe(),
        metric: problem.metric_tag.clone(),
        solver: "jacobi".into(),
        dimension: dim,
        tolerance: JACOBI_TOL,
        iterations: 0,
        symmetry_defect: problem.symmetry_defect,
    };
    let values = match (&problem.stiffness, &problem.mass) {
        (Stiffness::Dense(s), Mass::Dense(m)) => generalized_eigen(&s.scaled(-1.0), m)?.0,
        (Stiffness::Dense(s), Mass::Diagonal(d)) => {
            generalized_eigen(&s.scaled(-1.0), &DenseMatrix::diagonal(d))?.0
        }
        (Stiffness::Sparse(s), Mass::Diagonal(d)) => {
            if d.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Numeric(
                    "mass matrix is not positive definite".into(),
                ));
            }
            let r: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
            if use_dense {
                let mut a = DenseMatrix::zeros(dim);
                for (i, row) in s.outer_iterator().enumerate() {
                    for (j, v) in row.iter() {
                        a[(i, j)] = -v * r[i] * r[j];
                    }
                }
                dense::jacobi(&a, JACOBI_TOL)?.0
            } else {
                let op = |x: &[f64], y: &mut [f64]| {
                    let z: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a * b).collect();
                    csr_matvec(s, &z, y);
                    for (yi, ri) in y.iter_mut().zip(&r) {
                        *yi *= -ri;
                    }
                };
                let out = match problem.model {
                    Some(model) => {
                        // with constant density the scaled operator is exactly the model
                        let shift = 4.0 * PI * PI * model.sigma[0][0].min(model.sigma[1][1]);
                        let pc = FftPreconditioner::new(model, shift);
                        let pcf = |x: &[f64], y: &mut [f64]| pc.apply(x, y);
                        lobpcg(dim, &op, &pcf, k, opts)?
                    }
                    None => {
                        let diag: Vec<f64> = (0..dim)
                            .map(|i| -s.get(i, i).copied().unwrap_or(0.0) * r[i] * r[i])
                            .collect();
                        let shift = diag.iter().fold(0.0f64, |a, b| a.max(*b)) * 1e-3;
                        let pcf = |x: &[f64], y: &mut [f64]| {
                            for i in 0..x.len() {
                                y[i] = x[i] / (diag[i] + shift);
                            }
                        };
                        lobpcg(dim, &op, &pcf, k, opts)?
                    }
                };
                meta.solver = "lobpcg".into();
                meta.tolerance = opts.tol;
                meta.iterations = out.iterations;
                out.values
            }
        }
        (Stiffness::Sparse(_), Mass::Dense(_)) => {
            return Err(Error::Config(
                "sparse stiffness with dense mass is not supported".into(),
            ))
        }
    };
    let mut values = values;
    values.sort_by(f64::total_cmp);
    values.truncate(k);
    Ok(SpectrumResult::new(values, meta))
}

/// Union of per-order sphere spectra: orders `m > 0` count twice (`+-m`).
pub fn sphere_spectrum(
    lmax: usize,
    k: usize,
    problem: &(dyn Fn(i64) -> Result<SpectralProblem> + Sync),
) -> Result<SpectrumResult> {
    let per_m: Vec<(Vec<f64>, SolverMeta)> = (0..=lmax as i64)
        .into_par_iter()
        .map(|m| {
            let p = problem(m)?;
            let r = solve_eigen(&p, p.dim())?;
            let mut vals = r.eigenvalues.clone();
            if m > 0 {
                vals.extend(r.eigenvalues);
            }
            Ok((vals, r.meta))
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<f64> = per_m.iter().flat_map(|(v, _)| v.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    if k == 0 || k > all.len() {
        return Err(Error::Config(format!("k = {k} outside 1..={}", all.len())));
    }
    all.truncate(k);
    let first = &per_m[0].1;
    let meta = SolverMeta {
        basis: format!("sphere-harmonics(lmax={lmax}, all m)"),
        metric: first.metric.clone(),
        solver: first.solver.clone(),
        dimension: (lmax + 1) * (lmax + 1),
        tolerance: first.tolerance,
        iterations: 0,
        symmetry_defect: per_m
            .iter()
            .fold(0.0f64, |s, (_, m)| s.max(m.symmetry_defect)),
    };
    Ok(SpectrumResult::new(all, meta))
}

/// Unit tangent vectors and raw `A^dA` weights over base quadrature points.
#[derive(Clone, Debug)]
pub struct FiberCache {
    pub chart: Chart,
    pub points: Vec<[f64; 2]>,
    pub base_weights: Vec<f64>,
    /// Per base point: `(V, lambda dphi)` with `F(V) = 1`.
    pub fibers: Vec<Vec<([f64; 2], f64)>>,
    /// Volume density of `Omega` at each base point.
    pub densities: Vec<f64>,
}

impl FiberCache {
    pub fn new(
        metric: &dyn FinslerMetric,
        quad: &BaseQuadrature,
        fiber_n: usize,
    ) -> Result<FiberCache> {
        if quad.chart != metric.chart() {
            return Err(Error::Config(format!(
                "quadrature on chart {} given a metric on chart {}",
                quad.chart,
                metric.chart()
            )));
        }
        let fibers: Vec<(Vec<([f64; 2], f64)>, f64)> = quad
            .points
            .par_iter()
            .map(|p| {
                let fq =
                    fiber_quadrature(metric, &ChartPoint::on(quad.chart, p[0], p[1]), fiber_n)?;
                let dirs = fq
                    .nodes
                    .iter()
                    .zip(&fq.raw_weights)
                    .map(|(phi, w)| {
                        let e = direction(*phi);
                        let f = metric.value(*p, e);
                        ([e[0] / f, e[1] / f], *w)
                    })
                    .collect();
                Ok((dirs, fq.mean_density()))
            })
            .collect::<Result<_>>()?;
        let (fibers, densities) = fibers.into_iter().unzip();
        Ok(FiberCache {
            chart: quad.chart,
            points: quad.points.clone(),
            base_weights: quad.weights.clone(),
            fibers,
            densities,
        })
    }

    /// `E(u) = (1/pi) sum (du . V)^2 lambda dphi dA`.
    pub fn energy(&self, u: &dyn ScalarField) -> f64 {
        self.points
            .par_iter()
            .zip(&self.fibers)
            .zip(&self.base_weights)
            .map(|((p, fib), wb)| {
                let (_, g, _) = field_derivatives(u, *p);
                wb * fib
                    .iter()
                    .map(|(v, w)| w * (g[0] * v[0] + g[1] * v[1]).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / PI
    }

    /// `int u v Omega`.
    pub fn inner(&self, u: &dyn ScalarField, v: &dyn ScalarField) -> f64 {
        self.points
            .iter()
            .zip(&self.densities)
            .zip(&self.base_weights)
            .map(|((p, rho), wb)| wb * rho * u.eval(*p) * v.eval(*p))
            .sum()
    }

    pub fn volume(&self) -> f64 {
        self.densities
            .iter()
            .zip(&self.base_weights)
            .map(|(r, w)| r * w)
            .sum()
    }

    /// `E(u) / int u^2 Omega`.
    pub fn rayleigh(&self, u: &dyn ScalarField) -> Result<f64> {
        let n2 = self.inner(u, u);
        if !(n2 > 0.0) {
            return Err(Error::Domain(
                "Rayleigh quotient of a function with zero norm".into(),
            ));
        }
        Ok(self.energy(u) / n2)
    }
}

/// Energy of `u` over `quad` with `fiber_n` fiber nodes.
pub fn energy(
    metric: &dyn FinslerMetric,
    u: &dyn ScalarField,
    quad: &BaseQuadrature,
    fiber_n: usize,
) -> Result<f64> {
    Ok(FiberCache::new(metric, quad, fiber_n)?.energy(u))
}

/// Rayleigh quotient of `u` over `quad` with `fiber_n` fiber nodes.
pub fn rayleigh(
    metric: &dyn FinslerMetric,
    u: &dyn ScalarField,
    quad: &BaseQuadrature,
    fiber_n: usize,
) -> Result<f64> {
    FiberCache::new(metric, quad, fiber_n)?.rayleigh(u)
}

/// Both sides of the Green identity `E(u) = -<u, Delta u>_Omega`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GreenReport {
    pub energy: f64,
    pub pairing: f64,
    /// `|E(u) + <u, Delta u>_Omega| / E(u)`.
    pub relative_defect: f64,
}

pub fn green_identity(
    metric: &dyn FinslerMetric,
    u: &dyn ScalarField,
    quad: &BaseQuadrature,
    fiber_n: usize,
) -> Result<GreenReport> {
    let cache = FiberCache::new(metric, quad, fiber_n)?;
    let e = cache.energy(u);
    let pairing = quad
        .points
        .par_iter()
        .zip(&quad.weights)
        .map(|(p, w)| {
            let c = coefficients_unchecked(metric, *p, fiber_n)?;
            let (v, g, h) = field_derivatives(u, *p);
            Ok(w * c.vol_density * v * c.apply(g, h))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum::<f64>();
    Ok(GreenReport {
        energy: e,
        pairing,
        relative_defect: (e + pairing).abs() / e.abs().max(f64::MIN_POSITIVE),
    })
}
