//! Quadrature rules on the base charts.

use std::f64::consts::PI;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};
use crate::metric::Chart;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes increasing.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let rule = GaussLegendre::new(n)
        .map_err(|_| Error::Numeric(format!("Gauss-Legendre rule of degree {n} unavailable")))?;
    let mut pairs: Vec<(f64, f64)> = rule.into_node_weight_pairs();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Points and weights integrating against `du dv` on a chart.
#[derive(Clone, Debug)]
pub struct BaseQuadrature {
    pub chart: Chart,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl BaseQuadrature {
    /// Uniform `n x n` midpoint-free grid on the unit torus (spectral for periodic integrands).
    pub fn torus(n: usize) -> Self {
        let h = 1.0 / n as f64;
        let mut points = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                points.push([i as f64 * h, j as f64 * h]);
            }
        }
        BaseQuadrature {
            chart: Chart::Torus,
            weights: vec![h * h; n * n],
            points,
        }
    }

    /// Gauss-Legendre in `cos(phi)` times a uniform grid in `theta`.
    ///
    /// The weights carry the `1/sin(phi)` that converts `d(cos phi)` to `dphi`,
    /// so integrands containing `sin(phi)` are integrated as polynomials in `cos(phi)`.
    pub fn sphere(n_phi: usize, n_theta: usize) -> Result<Self> {
        let (t, w) = gauss_legendre(n_phi)?;
        let dtheta = 2.0 * PI / n_theta as f64;
        let mut points = Vec::with_capacity(n_phi * n_theta);
        let mut weights = Vec::with_capacity(n_phi * n_theta);
        for (ti, wi) in t.iter().zip(&w) {
            let phi = ti.acos();
            let s = phi.sin();
            for k in 0..n_theta {
                points.push([phi, k as f64 * dtheta]);
                weights.push(wi / s * dtheta);
            }
        }
        Ok(BaseQuadrature {
            chart: Chart::SpherePolar,
            points,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate<F: Fn([f64; 2]) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }
}
