//! FFT inverse of a constant-coefficient periodic 9-point operator, used to
//! precondition torus eigenproblems.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Constant-coefficient model `-sigma : D_h^2` on an `n x n` periodic grid of step `1/n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusSymbol {
    pub n: usize,
    pub sigma: [[f64; 2]; 2],
}

impl TorusSymbol {
    /// Eigenvalue of the discrete model on the Fourier mode `(p, q)`.
    pub fn eigenvalue(&self, p: usize, q: usize) -> f64 {
        let n = self.n as f64;
        let h2 = 1.0 / (n * n);
        let a = 2.0 * std::f64::consts::PI * p as f64 / n;
        let b = 2.0 * std::f64::consts::PI * q as f64 / n;
        let s = &self.sigma;
        (4.0 * s[0][0] * (0.5 * a).sin().powi(2)
            + 4.0 * s[1][1] * (0.5 * b).sin().powi(2)
            + 2.0 * s[0][1] * a.sin() * b.sin())
            / h2
    }
}

pub struct FftPreconditioner {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    inv_symbol: Vec<f64>,
}

impl FftPreconditioner {
    /// `(model + shift)^{-1}`; `shift` must be positive.
    pub fn new(symbol: TorusSymbol, shift: f64) -> Self {
        let n = symbol.n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut inv_symbol = vec![0.0; n * n];
        for q in 0..n {
            for p in 0..n {
                inv_symbol[q * n + p] = 1.0 / (symbol.eigenvalue(p, q) + shift);
            }
        }
        FftPreconditioner {
            n,
            forward,
            inverse,
            inv_symbol,
        }
    }

    fn transform(&self, buf: &mut [Complex<f64>], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        for row in buf.chunks_mut(n) {
            fft.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for k in 0..n {
            for l in 0..n {
                col[l] = buf[l * n + k];
            }
            fft.process(&mut col);
            for l in 0..n {
                buf[l * n + k] = col[l];
            }
        }
    }

    /// `y = (model + shift)^{-1} x` for node ordering `l * n + k`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        for (b, s) in buf.iter_mut().zip(&self.inv_symbol) {
            *b *= *s;
        }
        self.transform(&mut buf, &self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        for (yi, b) in y.iter_mut().zip(&buf) {
            *yi = b.re * scale;
        }
    }
}
